"""Monte Carlo engines: frame-level loss, latency, and burst-erasure runs.

Work is partitioned into fixed-size blocks, each drawing from its own
(master seed, tag, block index) stream, and results are reduced in block
order. Outputs are therefore bit-identical for any thread count.

The loss engine evaluates the same layer checks as framing.decapsulate but
vectorized over a batch of corruption patterns; equivalence against the
scalar path is covered by tests.
"""

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import features as feat
from .channel import ber_from_snr, db_to_linear
from .framing import (DEFAULT_ADDRESSING, AppHeader, DropCause, encapsulate,
                      frame_layout)
from .lossmodel import p_cross_fail
from .rng import (TAG_BURST, TAG_LATENCY, TAG_LOSS_SIM, TAG_PAYLOAD,
                  substream)

BLOCK_FRAMES = 4096
BLOCK_TRIALS = 8192

# Cause codes used by the batch engine; index 0 is "delivered".
CAUSE_ORDER = (DropCause.NONE, DropCause.SYNC_FAIL, DropCause.PHY_HEADER_FAIL,
               DropCause.DATALINK_CRC_FAIL, DropCause.NET_HEADER_FAIL,
               DropCause.TRANSPORT_CHECKSUM_FAIL, DropCause.APP_HEADER_FAIL)

_POW16 = (1 << np.arange(15, -1, -1)).astype(np.int64)


@dataclass(frozen=True)
class LossReport:
    """One grid point: analytic loss vs Monte Carlo measurement."""

    protocol: str
    modulation: int
    payload_bits: int
    ebn0_db: float
    pb: float
    analytic: float
    measured: float
    frames: int
    ci3sigma: float
    cause_counts: dict


@dataclass(frozen=True)
class LatencySample:
    protocol: str
    trial: int
    latency_ms: float
    attempts: int
    delivered: bool


@dataclass(frozen=True)
class BurstResult:
    """One burst-channel run over a feature group."""

    interleaved: bool
    t1: int
    t2: int
    total_packets: int
    lost_packets: int
    erasure_fractions: np.ndarray
    mses: np.ndarray

    @property
    def measured_loss_rate(self):
        return self.lost_packets / self.total_packets


def map_blocks(fn, nblocks, threads):
    """Apply fn to block indices, preserving index order in the result."""
    if threads <= 1:
        return [fn(i) for i in range(nblocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(nblocks)))


def _fold16(values):
    """End-around-carry fold of plain integer word sums, vectorized."""
    values = values.astype(np.int64)
    while (values >> 16).any():
        values = (values & 0xFFFF) + (values >> 16)
    return values


class _FrameEngine:
    """Precomputed layer-check geometry for one reference frame."""

    def __init__(self, cfg, seed):
        payload_rng = substream(seed, TAG_PAYLOAD)
        payload = payload_rng.integers(0, 2, size=cfg.payload_len_bits,
                                       dtype=np.uint8)
        self.cfg = cfg
        self.reference = encapsulate(payload, AppHeader(1, 0, 0), cfg,
                                     DEFAULT_ADDRESSING)
        layout, self.total_bits = frame_layout(cfg)
        self.slices = {name: slice(off, off + ln)
                       for name, (off, ln) in layout.items()}
        self.ref_bits = self.reference.bits
        self.ref_dh = self.ref_bits[self.slices["DH"]]
        self.ref_crc = zlib.crc32(np.packbits(self.ref_dh).tobytes())
        pseudo = self.reference.pseudo.to_bytes()
        self.pseudo_word_sum = sum((pseudo[i] << 8) | pseudo[i + 1]
                                   for i in range(0, len(pseudo), 2))
        if cfg.protocol == "SITP":
            region = self.slices["TH"]
        else:
            region = slice(self.slices["TH"].start,
                           self.slices["PAYLOAD"].stop)
        self.cksum_slice = region
        region_len = region.stop - region.start
        # Packing to bytes then summing 16-bit words equals zero-padding the
        # bit region to a multiple of 16.
        self.cksum_pad = (-region_len) % 16
        self.ref_region = self.ref_bits[region]

    def causes_for_flips(self, flips):
        """Per-row first-failure cause codes for a batch of flip masks."""
        n = flips.shape[0]
        sl = self.slices
        causes = np.zeros(n, dtype=np.int8)
        alive = np.ones(n, dtype=bool)

        sync_fail = np.count_nonzero(flips[:, sl["SYNC"]], axis=1) \
            > self.cfg.sync_tolerance
        causes[sync_fail] = 1
        alive &= ~sync_fail

        ph_fail = alive & flips[:, sl["PH"]].any(axis=1)
        causes[ph_fail] = 2
        alive &= ~ph_fail

        dh_dirty = alive & flips[:, sl["DH"]].any(axis=1)
        rows = np.nonzero(dh_dirty)[0]
        if rows.size:
            rx_dh = self.ref_dh[None, :] ^ flips[rows][:, sl["DH"]].astype(np.uint8)
            packed = np.packbits(rx_dh, axis=1)
            crc_bad = np.fromiter(
                (zlib.crc32(row.tobytes()) != self.ref_crc for row in packed),
                dtype=bool, count=rows.size)
            bad_rows = rows[crc_bad]
            causes[bad_rows] = 3
            alive[bad_rows] = False

        net_fail = alive & flips[:, sl["NH"]].any(axis=1)
        causes[net_fail] = 4
        alive &= ~net_fail

        rx_region = self.ref_region[None, :] ^ \
            flips[:, self.cksum_slice].astype(np.uint8)
        if self.cksum_pad:
            rx_region = np.concatenate(
                [rx_region, np.zeros((n, self.cksum_pad), dtype=np.uint8)],
                axis=1)
        words = rx_region.reshape(n, -1, 16).astype(np.int64) @ _POW16
        sums = _fold16(words.sum(axis=1) + self.pseudo_word_sum)
        transport_fail = alive & (sums != 0xFFFF)
        causes[transport_fail] = 5
        alive &= ~transport_fail

        ah_fail = alive & flips[:, sl["AH"]].any(axis=1)
        causes[ah_fail] = 6
        return causes


def _loss_block(engine, pb, n, rng, max_attempts):
    """Cause counts over one block; TCP rows retry with fresh corruption."""
    flips = rng.random((n, engine.total_bits)) < pb
    causes = engine.causes_for_flips(flips)
    for _ in range(max_attempts - 1):
        lost = np.nonzero(causes != 0)[0]
        if lost.size == 0:
            break
        retry_flips = rng.random((lost.size, engine.total_bits)) < pb
        retry_causes = engine.causes_for_flips(retry_flips)
        causes[lost] = retry_causes
    return np.bincount(causes, minlength=len(CAUSE_ORDER)).astype(np.int64)


def run_loss_experiment(cfg, snr_grid_db, frames_per_point, seed, threads=1):
    """Frame-level Monte Carlo over an Eb/N0 grid, paired with the model.

    Builds one reference frame, corrupts it frames_per_point times per grid
    point at the BER implied by each Eb/N0, runs the receive checks, and
    returns one LossReport per point. TCP retries each lost frame with fresh
    corruption up to max_retransmissions times, counting a loss only when
    every attempt fails.
    """
    snr_grid_db = list(snr_grid_db)
    if not snr_grid_db:
        raise ValueError("snr grid must not be empty")
    if frames_per_point < 1:
        raise ValueError("frames_per_point must be >= 1")
    engine = _FrameEngine(cfg, seed)
    max_attempts = 1 + (cfg.max_retransmissions if cfg.protocol == "TCP" else 0)
    nblocks = math.ceil(frames_per_point / BLOCK_FRAMES)
    report = []
    for point, ebn0_db in enumerate(snr_grid_db):
        pb = ber_from_snr(db_to_linear(ebn0_db), cfg.modulation_order)

        def block(idx, _pb=pb, _point=point):
            size = min(BLOCK_FRAMES, frames_per_point - idx * BLOCK_FRAMES)
            rng = substream(seed, TAG_LOSS_SIM, _point, idx)
            return _loss_block(engine, _pb, size, rng, max_attempts)

        counts = sum(map_blocks(block, nblocks, threads))
        analytic = p_cross_fail(pb, cfg).p_cross_fail
        lost = int(counts.sum() - counts[0])
        report.append(LossReport(
            protocol=cfg.protocol,
            modulation=cfg.modulation_order,
            payload_bits=cfg.payload_len_bits,
            ebn0_db=float(ebn0_db),
            pb=pb,
            analytic=analytic,
            measured=lost / frames_per_point,
            frames=frames_per_point,
            ci3sigma=3.0 * math.sqrt(analytic * (1.0 - analytic)
                                     / frames_per_point),
            cause_counts={cause: int(counts[i])
                          for i, cause in enumerate(CAUSE_ORDER)},
        ))
    return report


def sample_truncated_gaussian(mean, sd, minimum, rng):
    """Normal(mean, sd) draw, redrawn until >= minimum; sd=0 returns mean."""
    if sd < 0:
        raise ValueError(f"sd must be >= 0, got {sd}")
    if sd == 0:
        return float(mean)
    while True:
        value = rng.normal(mean, sd)
        if value >= minimum:
            return float(value)


def _truncated_gaussian_vec(mean, sd, minimum, size, rng):
    if sd == 0:
        return np.full(size, float(mean))
    out = rng.normal(mean, sd, size)
    bad = out < minimum
    while bad.any():
        out[bad] = rng.normal(mean, sd, int(bad.sum()))
        bad = out < minimum
    return out


def _latency_block_tcp(params, n, rng):
    """TCP: 1.5 RTT handshake plus one RTT per attempt, capped retries.

    A failed attempt costs its RTT draw (timeout); trials with every attempt
    failed come back delivered=False with the accumulated time.
    """
    latency = 1.5 * _truncated_gaussian_vec(
        params.tcp_rtt_mean_ms, params.tcp_rtt_jitter_ms,
        params.tcp_rtt_min_ms, n, rng)
    attempts = np.zeros(n, dtype=np.int64)
    delivered = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(1 + params.tcp_max_retx):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        rtts = _truncated_gaussian_vec(
            params.tcp_rtt_mean_ms, params.tcp_rtt_jitter_ms,
            params.tcp_rtt_min_ms, idx.size, rng)
        latency[idx] += rtts
        attempts[idx] += 1
        success = rng.random(idx.size) >= params.loss_rate
        delivered[idx[success]] = True
        active[idx[success]] = False
    return latency, attempts, delivered


def _latency_block_oneway(params, n, rng):
    """UDP/SITP fire-and-forget: one one-way draw, loss tracked separately."""
    latency = _truncated_gaussian_vec(
        params.oneway_mean_ms, params.oneway_jitter_ms,
        params.oneway_min_ms, n, rng)
    delivered = rng.random(n) >= params.loss_rate
    return latency, np.ones(n, dtype=np.int64), delivered


LATENCY_PROTOCOLS = ("TCP", "UDP", "SITP")


def run_latency_experiment(params, seed, threads=1):
    """Single-packet latency Monte Carlo for TCP, UDP, and SITP.

    Returns (samples, summary). Latency statistics cover delivered trials
    for TCP (undelivered ones have no delivery time and only contribute to
    the delivery rate) and all trials for UDP/SITP, whose send time is the
    latency of a fire-and-forget transmission.
    """
    if params.trials < 1:
        raise ValueError("trials must be >= 1")
    nblocks = math.ceil(params.trials / BLOCK_TRIALS)
    samples = []
    summary = {}
    for proto_idx, protocol in enumerate(LATENCY_PROTOCOLS):

        def block(idx, _proto_idx=proto_idx, _protocol=protocol):
            size = min(BLOCK_TRIALS, params.trials - idx * BLOCK_TRIALS)
            rng = substream(seed, TAG_LATENCY, _proto_idx, idx)
            if _protocol == "TCP":
                return _latency_block_tcp(params, size, rng)
            return _latency_block_oneway(params, size, rng)

        parts = map_blocks(block, nblocks, threads)
        latency = np.concatenate([p[0] for p in parts])
        attempts = np.concatenate([p[1] for p in parts])
        delivered = np.concatenate([p[2] for p in parts])
        samples.extend(
            LatencySample(protocol, trial, float(latency[trial]),
                          int(attempts[trial]), bool(delivered[trial]))
            for trial in range(params.trials))
        stats_mask = delivered if protocol == "TCP" else \
            np.ones(params.trials, dtype=bool)
        stats = latency[stats_mask]
        summary[protocol] = {
            "mean_ms": float(np.mean(stats)),
            "median_ms": float(np.median(stats)),
            "p95_ms": float(np.percentile(stats, 95)),
            "p99_ms": float(np.percentile(stats, 99)),
            "delivery_rate": float(np.mean(delivered)),
        }
    return samples, summary


def run_burst_experiment(cfg, schedule, group, interleave, seed):
    """Send one feature group through the burst-fade channel as SITP packets.

    The fade keeps its configured length but its start is redrawn uniformly
    in [0, T - fade_len] for each run (sliding window). Lost packets erase
    their payload bits; surviving packets keep channel bit flips. Returns
    per-image erased-bit fractions and reconstruction MSE against the
    original feature vectors.
    """
    payload_bits = cfg.payload_len_bits
    total_bits = group.total_bits
    if total_bits % payload_bits:
        raise ValueError(
            f"group bits ({total_bits}) must divide into {payload_bits}-bit "
            "payloads")
    total_packets = total_bits // payload_bits
    if schedule.total_packets != total_packets:
        raise ValueError(
            f"schedule covers {schedule.total_packets} packets but the group "
            f"packs into {total_packets}")
    fade_len = schedule.fade_len
    rng = substream(seed, TAG_BURST, int(interleave))
    t1 = int(rng.integers(0, total_packets - fade_len + 1))
    realized = replace(schedule, t1=t1, t2=t1 + fade_len)

    stream = feat.interleave(group) if interleave \
        else np.concatenate(group.quantized())
    in_fade = np.zeros(total_packets, dtype=bool)
    in_fade[realized.t1:realized.t2] = True
    pb_hi = ber_from_snr(db_to_linear(schedule.gamma_high_db),
                         cfg.modulation_order)
    pb_lo = ber_from_snr(db_to_linear(schedule.gamma_low_db),
                         cfg.modulation_order)
    pb = np.where(in_fade, pb_lo, pb_hi)
    p_loss = np.where(in_fade, p_cross_fail(pb_lo, cfg).p_cross_fail,
                      p_cross_fail(pb_hi, cfg).p_cross_fail)

    lost = rng.random(total_packets) < p_loss
    flips = rng.random((total_packets, payload_bits)) < pb[:, None]
    flips[lost] = False  # erased packets carry no surviving bits
    received = stream ^ flips.reshape(-1).astype(np.uint8)
    mask = np.repeat(lost, payload_bits)

    perm = group.permutation if interleave \
        else np.arange(total_bits, dtype=np.int64)
    parts = feat.deinterleave(received, mask, perm,
                              n_images=group.n_images)
    fractions = np.empty(group.n_images)
    mses = np.empty(group.n_images)
    for i, (bits_i, mask_i) in enumerate(parts):
        fractions[i] = float(mask_i.mean())
        filled = feat.erasure_fill(bits_i, mask_i, group.bits_per_symbol)
        recon = feat.dequantize(filled, group.bits_per_symbol,
                                group.norm_bounds[i])
        mses[i] = feat.feature_mse(group.vectors[i], recon)
    return BurstResult(
        interleaved=bool(interleave),
        t1=realized.t1,
        t2=realized.t2,
        total_packets=total_packets,
        lost_packets=int(lost.sum()),
        erasure_fractions=fractions,
        mses=mses,
    )
