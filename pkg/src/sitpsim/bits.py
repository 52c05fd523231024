"""Bit-vector helpers.

Bit vectors are numpy uint8 arrays of 0/1 values in wire order: the first
element is the first bit on the air, and bits within a byte are MSB-first
(numpy packbits/unpackbits convention). Multi-bit integer fields are
big-endian.
"""

import numpy as np


def as_bits(seq):
    """Coerce a 0/1 sequence to a uint8 bit vector."""
    arr = np.asarray(seq, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit vector must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError("bit vector entries must be 0 or 1")
    return arr


def bits_from_bytes(data):
    """Unpack bytes to a bit vector, MSB first."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bytes_from_bits(bits):
    """Pack a bit vector to bytes, zero-padding the final byte on the right."""
    return np.packbits(as_bits(bits)).tobytes()


def bits_from_int(value, width):
    """Big-endian bit vector of `value` in exactly `width` bits."""
    if value < 0 or value >= (1 << width):
        raise ValueError(f"value {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)],
                    dtype=np.uint8)


def int_from_bits(bits):
    """Integer from a big-endian bit vector."""
    out = 0
    for b in np.asarray(bits, dtype=np.uint8):
        out = (out << 1) | int(b)
    return out


def hamming_distance(a, b):
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))
