"""SNR/BER analytics and channel realizations.

The protocol simulator operates on bits through an i.i.d. bit-flip channel
parameterized by the BER. The symbol-level Gray-QAM/AWGN path exists to
validate the closed-form BER model, not to carry frames.
"""

import math

import numpy as np

from .bits import as_bits
from .rng import TAG_QAM, substream

SUPPORTED_QAM = (4, 16, 64)


def qfunc(x):
    """Gaussian tail probability Q(x) = 0.5 * erfc(x / sqrt(2))."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(linear):
    return 10.0 * math.log10(linear)


def ber_from_snr(gamma_b, order):
    """BER of square Gray-mapped M-QAM at linear bit-SNR gamma_b.

    (4 / log2 M) * (1 - 1/sqrt(M)) * Q(sqrt(3 log2 M * gamma_b / (M - 1))),
    clamped to [0, 0.5] to guarantee a valid bit-flip probability; the
    nearest-neighbour approximation is only meaningful at moderate-to-high
    SNR anyway.
    """
    if order not in SUPPORTED_QAM:
        raise ValueError(f"unsupported modulation order {order}")
    if gamma_b < 0:
        raise ValueError(f"bit SNR must be >= 0, got {gamma_b}")
    k = math.log2(order)
    ber = (4.0 / k) * (1.0 - 1.0 / math.sqrt(order)) * \
        qfunc(math.sqrt(3.0 * k * gamma_b / (order - 1)))
    return min(max(ber, 0.0), 0.5)


def bit_snr_from_symbol_snr(es_n0, order):
    """Eb/N0 from Es/N0: divide by the bits carried per symbol."""
    if es_n0 < 0:
        raise ValueError(f"symbol SNR must be >= 0, got {es_n0}")
    return es_n0 / math.log2(order)


class BitChannel:
    """i.i.d. bit-flip channel: each bit inverted with probability `ber`.

    Holds its own generator state; identical seeds reproduce identical flip
    patterns bit-for-bit.
    """

    def __init__(self, ber, rng):
        if not 0.0 <= ber <= 1.0:
            raise ValueError(f"ber must be in [0, 1], got {ber}")
        self.ber = ber
        self.rng = rng

    @classmethod
    def from_seed(cls, ber, seed, *path):
        return cls(ber, substream(seed, *path))


def flip_bits(bits, channel):
    """Pass a bit vector through the channel, advancing its RNG state."""
    bits = as_bits(bits)
    if channel.ber == 0.0:
        return bits.copy()
    flips = channel.rng.random(bits.size) < channel.ber
    return bits ^ flips.astype(np.uint8)


def snr_at(t, schedule):
    """Instantaneous SNR (dB) at packet index t under a burst schedule.

    The fade interval is half-open [t1, t2): gamma_low inside, gamma_high
    before and after.
    """
    if not 0 <= t <= schedule.total_packets:
        raise ValueError(
            f"packet index {t} outside [0, {schedule.total_packets}]")
    if schedule.t1 <= t < schedule.t2:
        return schedule.gamma_low_db
    return schedule.gamma_high_db


def _gray_to_index(gray):
    """Vectorized inverse Gray code."""
    idx = gray.copy()
    shift = gray >> 1
    while shift.any():
        idx ^= shift
        shift >>= 1
    return idx


def qam_awgn_ber(order, es_n0, nbits, seed, chunk_symbols=1 << 19):
    """Measured BER of Gray-mapped square M-QAM over AWGN.

    Unit-average-energy constellation; complex noise with per-dimension
    variance N0/2; minimum-distance hard demapping. Returns the flipped-bit
    fraction over `nbits` random bits.
    """
    if order not in SUPPORTED_QAM:
        raise ValueError(f"unsupported modulation order {order}")
    if es_n0 <= 0:
        raise ValueError(f"symbol SNR must be > 0, got {es_n0}")
    k = int(math.log2(order))
    if nbits % k:
        raise ValueError(f"nbits must be a multiple of {k}")
    levels = int(math.sqrt(order))
    kaxis = k // 2
    scale = math.sqrt(3.0 / (2.0 * (order - 1)))
    noise_std = math.sqrt(1.0 / es_n0 / 2.0)
    axis_powers = 1 << np.arange(kaxis - 1, -1, -1)
    popcount = np.array([bin(v).count("1") for v in range(levels)])

    rng = substream(seed, TAG_QAM, order)
    nsym = nbits // k
    errors = 0
    done = 0
    while done < nsym:
        n = min(chunk_symbols, nsym - done)
        bits = rng.integers(0, 2, size=(n, k), dtype=np.uint8)
        gray_i = bits[:, :kaxis] @ axis_powers
        gray_q = bits[:, kaxis:] @ axis_powers
        idx_i = _gray_to_index(gray_i)
        idx_q = _gray_to_index(gray_q)
        sym_i = (2 * idx_i - (levels - 1)) * scale
        sym_q = (2 * idx_q - (levels - 1)) * scale
        noise = rng.normal(0.0, noise_std, size=(n, 2))
        recv_i = sym_i + noise[:, 0]
        recv_q = sym_q + noise[:, 1]
        for recv, gray in ((recv_i, gray_i), (recv_q, gray_q)):
            det = np.rint((recv / scale + (levels - 1)) / 2.0).astype(np.int64)
            np.clip(det, 0, levels - 1, out=det)
            det_gray = det ^ (det >> 1)
            errors += int(popcount[det_gray ^ gray].sum())
        done += n
    return errors / nbits
