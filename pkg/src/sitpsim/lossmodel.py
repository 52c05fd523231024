"""Closed-form cross-layer packet-loss model.

Per-layer failure probabilities under i.i.d. bit errors at rate pb, combined
multiplicatively across the physical, data-link, network, transport, and
application layers. All header lengths are taken from StackConfig in bits.

SITP checks cover headers only, so its loss is independent of the payload
length. The UDP and TCP baselines apply the same layer template with
conventional header+payload coverage under the data-link CRC and transport
checksum; TCP additionally retries, so its end-to-end loss is the
single-attempt loss raised to (1 + max_retransmissions). Overlapping
coverage regions are treated as independent layer events, which slightly
double-counts shared bits for the baselines; the frame-level Monte Carlo is
the exact reference for SITP, where coverages are disjoint.
"""

import math
import warnings
from dataclasses import dataclass

from .channel import ber_from_snr, db_to_linear, snr_at


@dataclass(frozen=True)
class LayerLossBreakdown:
    """Per-layer and end-to-end loss probabilities at one bit-error rate."""

    p_sync_fail: float
    p_ph_fail: float
    p_phy_fail: float
    p_dalink_fail: float
    p_net_fail: float
    p_transport_fail: float
    p_app_fail: float
    p_cross_fail: float


def _check_pb(pb):
    if not 0.0 <= pb <= 1.0:
        raise ValueError(f"bit error rate must be in [0, 1], got {pb}")


def clean_prob(pb, nbits):
    """(1 - pb)^nbits, evaluated as exp(n * log1p(-pb)) for small-pb accuracy."""
    _check_pb(pb)
    if nbits == 0:
        return 1.0
    if pb == 1.0:
        return 0.0
    return math.exp(nbits * math.log1p(-pb))


def dirty_prob(pb, nbits):
    """1 - (1 - pb)^nbits without cancellation at small pb."""
    _check_pb(pb)
    if nbits == 0:
        return 0.0
    if pb == 1.0:
        return 1.0
    return -math.expm1(nbits * math.log1p(-pb))


def p_sync_success(pb, n_sync_bits, t_sync):
    """P(at most t_sync of n_sync_bits sync bits flip): binomial CDF.

    Accumulated by the incremental term ratio, which is stable for the small
    n involved here; degenerate t_sync >= n accepts every pattern.
    """
    _check_pb(pb)
    if t_sync >= n_sync_bits:
        warnings.warn(
            f"sync tolerance {t_sync} >= word length {n_sync_bits}: "
            "every pattern is accepted", stacklevel=2)
        return 1.0
    if pb == 0.0:
        return 1.0
    if pb == 1.0:
        return 0.0
    term = clean_prob(pb, n_sync_bits)
    total = term
    ratio = pb / (1.0 - pb)
    for i in range(t_sync):
        term *= (n_sync_bits - i) / (i + 1.0) * ratio
        total += term
    return min(total, 1.0)


def p_phy_fail(pb, cfg):
    """Physical layer: sync miss or any flip in the PH pattern."""
    return 1.0 - (p_sync_success(pb, cfg.sync_len_bits, cfg.sync_tolerance)
                  * clean_prob(pb, cfg.ph_len_bits))


def _dalink_coverage_bits(cfg):
    # SITP restricts the data-link CRC to the DH; the baselines use the
    # conventional coverage of everything the link frame carries.
    if cfg.protocol == "SITP":
        return cfg.dh_len_bits
    return (cfg.dh_len_bits + cfg.nh_len_bits + cfg.th_len_bits
            + cfg.ah_len_bits + cfg.payload_len_bits)


def p_dalink_fail(pb, cfg):
    """Data-link layer: CRC-covered bits corrupted and the error detected."""
    return dirty_prob(pb, _dalink_coverage_bits(cfg)) * \
        (1.0 - 2.0 ** -cfg.crc_width_bits)


def p_net_fail(pb, cfg):
    """Network layer: any flip in the NH."""
    return dirty_prob(pb, cfg.nh_len_bits)


def _transport_coverage_bits(cfg):
    if cfg.protocol == "SITP":
        return cfg.th_len_bits
    return cfg.th_len_bits + cfg.ah_len_bits + cfg.payload_len_bits


def p_transport_fail(pb, cfg):
    """Transport layer: checksum-covered bits corrupted and detected.

    SITP covers the transport header only, so the value is independent of the
    payload length; UDP/TCP cover header + app header + payload.
    """
    return dirty_prob(pb, _transport_coverage_bits(cfg)) * \
        (1.0 - 2.0 ** -cfg.checksum_width_bits)


def p_app_fail(pb, cfg):
    """Application layer: any flip in the AH (protocol-agnostic)."""
    return dirty_prob(pb, cfg.ah_len_bits)


def p_cross_fail(pb, cfg):
    """Full breakdown plus end-to-end loss at bit-error rate pb.

    The cross-layer value is 1 minus the product of per-layer survival
    probabilities; TCP raises the single-attempt loss to the power
    (1 + max_retransmissions) for its independent-retry model.
    """
    sync_suc = p_sync_success(pb, cfg.sync_len_bits, cfg.sync_tolerance)
    ph = dirty_prob(pb, cfg.ph_len_bits)
    phy = 1.0 - sync_suc * (1.0 - ph)
    dalink = p_dalink_fail(pb, cfg)
    net = p_net_fail(pb, cfg)
    transport = p_transport_fail(pb, cfg)
    app = p_app_fail(pb, cfg)
    single = 1.0 - ((1.0 - phy) * (1.0 - dalink) * (1.0 - net)
                    * (1.0 - transport) * (1.0 - app))
    cross = single
    if cfg.protocol == "TCP":
        cross = single ** (cfg.max_retransmissions + 1)
    return LayerLossBreakdown(
        p_sync_fail=1.0 - sync_suc,
        p_ph_fail=ph,
        p_phy_fail=phy,
        p_dalink_fail=dalink,
        p_net_fail=net,
        p_transport_fail=transport,
        p_app_fail=app,
        p_cross_fail=cross,
    )


def p_loss_from_ebn0_db(ebn0_db, cfg):
    """End-to-end loss at a given Eb/N0 in dB."""
    pb = ber_from_snr(db_to_linear(ebn0_db), cfg.modulation_order)
    return p_cross_fail(pb, cfg)


def p_loss_at(t, schedule, cfg):
    """End-to-end loss for the packet at index t under a burst schedule."""
    return p_loss_from_ebn0_db(snr_at(t, schedule), cfg).p_cross_fail


def avg_group_loss(schedule, cfg):
    """Group-average loss: baseline level plus the fade excess.

    P_hi + (t2 - t1) * (P_lo - P_hi) / T, algebraically identical to the
    time-weighted mean computed by avg_group_loss_weighted.
    """
    if schedule.total_packets <= 0:
        raise ValueError("schedule must cover at least one packet")
    p_hi = p_loss_from_ebn0_db(schedule.gamma_high_db, cfg).p_cross_fail
    p_lo = p_loss_from_ebn0_db(schedule.gamma_low_db, cfg).p_cross_fail
    return p_hi + schedule.fade_len * (p_lo - p_hi) / schedule.total_packets


def avg_group_loss_weighted(schedule, cfg):
    """Group-average loss as the explicit time-weighted three-segment sum."""
    if schedule.total_packets <= 0:
        raise ValueError("schedule must cover at least one packet")
    p_hi = p_loss_from_ebn0_db(schedule.gamma_high_db, cfg).p_cross_fail
    p_lo = p_loss_from_ebn0_db(schedule.gamma_low_db, cfg).p_cross_fail
    t1, t2, total = schedule.t1, schedule.t2, schedule.total_packets
    return (t1 * p_hi + (t2 - t1) * p_lo + (total - t2) * p_hi) / total
