"""Feature quantization and cross-image bit interleaving.

A feature group holds N real-valued vectors standing in for the latent
representations of N correlated images. Each vector is min-max normalized,
uniformly quantized to b bits per symbol, and the concatenated group
bitstream is spread by one shared random permutation so a burst of lost
packets erases a thin slice of every image instead of one whole image.
Normalization bounds are side information shared out of band.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .bits import as_bits
from .rng import TAG_FEATURES, TAG_PERMUTATION, substream

# Per-image feature length and quantizer depth used by the burst experiment
# when nothing else is configured: 8448 symbols * 8 bits = 264 packets of
# 256 payload bits per image, half the reference 528-packet fade.
DEFAULT_FEATURE_LEN = 8448
DEFAULT_BITS_PER_SYMBOL = 8


def _round_half_up(values):
    # numpy's rint rounds ties to even; the quantizer rounds .5 away from
    # zero, which for the non-negative normalized inputs is plain half-up.
    return np.floor(values + 0.5)


def quantize(u, b):
    """Min-max normalize, quantize to b-bit codes, emit bits MSB-first.

    Returns (bits, (min, max)). A constant vector maps every symbol to code
    0 with its bounds recorded, so dequantize restores the constant.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        raise ValueError("cannot quantize an empty vector")
    if not 1 <= b <= 16:
        raise ValueError(f"bits per symbol must be in [1, 16], got {b}")
    lo, hi = float(u.min()), float(u.max())
    if hi == lo:
        codes = np.zeros(u.size, dtype=np.int64)
    else:
        norm = (u - lo) / (hi - lo)
        codes = _round_half_up(norm * ((1 << b) - 1)).astype(np.int64)
    shifts = np.arange(b - 1, -1, -1)
    bits = ((codes[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)
    return bits, (lo, hi)


def dequantize(bits, b, norm_bounds):
    """Inverse of quantize: b-bit codes back to the original value range."""
    bits = as_bits(bits)
    if bits.size % b:
        raise ValueError(f"bit length {bits.size} not divisible by {b}")
    weights = (1 << np.arange(b - 1, -1, -1)).astype(np.int64)
    codes = bits.reshape(-1, b).astype(np.int64) @ weights
    lo, hi = norm_bounds
    return lo + codes / ((1 << b) - 1) * (hi - lo)


def make_permutation(total_bits, seed):
    """Seeded uniform random permutation of range(total_bits).

    Both endpoints derive the same permutation from the shared seed; the
    generator's permutation is a Fisher-Yates shuffle of the identity.
    """
    if total_bits < 1:
        raise ValueError(f"total_bits must be >= 1, got {total_bits}")
    rng = substream(seed, TAG_PERMUTATION)
    return rng.permutation(total_bits).astype(np.int64)


@dataclass(frozen=True)
class FeatureGroup:
    """N feature vectors plus the shared interleaving permutation."""

    vectors: tuple
    bits_per_symbol: int
    norm_bounds: tuple
    permutation: np.ndarray

    @property
    def n_images(self):
        return len(self.vectors)

    @property
    def bits_per_image(self):
        return self.vectors[0].size * self.bits_per_symbol

    @property
    def total_bits(self):
        return self.n_images * self.bits_per_image

    def quantized(self):
        """Per-image quantized bit vectors (recomputed from the stored data)."""
        return [quantize(v, self.bits_per_symbol)[0] for v in self.vectors]


def build_group(vectors, b, seed):
    """Quantize a list of equal-length vectors and attach a permutation."""
    vectors = tuple(np.asarray(v, dtype=np.float64) for v in vectors)
    if not vectors:
        raise ValueError("a feature group needs at least one vector")
    length = vectors[0].size
    if any(v.size != length for v in vectors):
        raise ValueError("all feature vectors must share one length")
    bounds = tuple(quantize(v, b)[1] for v in vectors)
    perm = make_permutation(len(vectors) * length * b, seed)
    return FeatureGroup(vectors=vectors, bits_per_symbol=b,
                        norm_bounds=bounds, permutation=perm)


def synthetic_group(n_images, feature_len, b, seed):
    """Group of seeded i.i.d. standard Gaussian feature vectors."""
    rng = substream(seed, TAG_FEATURES)
    vectors = [rng.normal(size=feature_len) for _ in range(n_images)]
    return build_group(vectors, b, seed)


def interleave(group):
    """Spread the concatenated group bits: out[perm[i]] = concat[i]."""
    concat = np.concatenate(group.quantized())
    perm = group.permutation
    if perm.size != concat.size:
        raise ValueError(f"permutation length {perm.size} != group bits "
                         f"{concat.size}")
    out = np.empty_like(concat)
    out[perm] = concat
    return out


def deinterleave(k, mask, permutation, n_images):
    """Invert interleave on bits and erasure mask, split per image.

    Returns a list of (bits, mask) pairs, one per image, in original order.
    """
    k = as_bits(k)
    mask = np.asarray(mask, dtype=bool)
    if k.size != mask.size:
        raise ValueError(f"mask length {mask.size} != bit length {k.size}")
    if permutation.size != k.size:
        raise ValueError(f"permutation length {permutation.size} != bit "
                         f"length {k.size}")
    if k.size % n_images:
        raise ValueError(f"{k.size} bits do not split into {n_images} images")
    bits = k[permutation]
    masks = mask[permutation]
    per_image = k.size // n_images
    return [(bits[i * per_image:(i + 1) * per_image],
             masks[i * per_image:(i + 1) * per_image])
            for i in range(n_images)]


def erasure_fill(bits, mask, b):
    """Replace erased bits with the matching bits of the midpoint code.

    A fully erased b-bit symbol decodes to round((2^b - 1) / 2) half-up; a
    partially erased one keeps its surviving bits.
    """
    bits = as_bits(bits)
    mask = np.asarray(mask, dtype=bool)
    if bits.size != mask.size:
        raise ValueError(f"mask length {mask.size} != bit length {bits.size}")
    if bits.size % b:
        raise ValueError(f"bit length {bits.size} not divisible by {b}")
    if not mask.any():
        return bits.copy()
    mid = int(_round_half_up(np.array([((1 << b) - 1) / 2.0]))[0])
    shifts = np.arange(b - 1, -1, -1)
    mid_bits = ((mid >> shifts) & 1).astype(np.uint8)
    template = np.tile(mid_bits, bits.size // b)
    out = bits.copy()
    out[mask] = template[mask]
    return out


def feature_mse(u, u_hat):
    """Mean squared difference between two equal-length real vectors."""
    u = np.asarray(u, dtype=np.float64)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    if u.shape != u_hat.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u_hat.shape}")
    return float(np.mean((u - u_hat) ** 2))


def save_group_csv(path, group):
    """Regression-fixture dump: one row per (image_index, symbol_index)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_index", "symbol_index", "value"])
        for i, vector in enumerate(group.vectors):
            for j, value in enumerate(vector):
                writer.writerow([i, j, repr(float(value))])


def load_group_csv(path, b, seed):
    """Rebuild a FeatureGroup from a save_group_csv dump."""
    per_image = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            per_image.setdefault(int(row["image_index"]), {})[
                int(row["symbol_index"])] = float(row["value"])
    vectors = []
    for i in sorted(per_image):
        symbols = per_image[i]
        vectors.append(np.array([symbols[j] for j in sorted(symbols)]))
    return build_group(vectors, b, seed)
