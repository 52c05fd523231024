import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitpsim.bits import bits_from_bytes, int_from_bits
from sitpsim.integrity import (PseudoHeader, SitpHeader, UnsupportedCrcWidth,
                               complement_checksum, compute_sitp_checksum,
                               crc32_bytes, crc_compute, ones_complement_sum,
                               sync_detect, verify_sitp_header)

EXAMPLE_HEADER = SitpHeader(0x1F90, 0x1F91, 0x0028)
EXAMPLE_PSEUDO = PseudoHeader(0x0A000001, 0x0A000002, 0x99, 0x0028)


def oracle_fold_sum(data):
    """Independent oracle: plain integer sum of words, folded once at the end."""
    data = bytes(data)
    if len(data) % 2:
        data += b"\x00"
    total = sum((data[i] << 8) | data[i + 1] for i in range(0, len(data), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


class TestOnesComplementSum:
    def test_empty(self):
        assert ones_complement_sum(b"") == 0x0000

    def test_hand_folded_example(self):
        # Words 0x0001, 0xF203, 0xF4F5, 0xF6F7 folded with end-around carry.
        data = bytes([0x00, 0x01, 0xF2, 0x03, 0xF4, 0xF5, 0xF6, 0xF7])
        assert ones_complement_sum(data) == 0xDDF2
        assert complement_checksum(data) == 0x220D

    def test_odd_length_pads_right(self):
        assert ones_complement_sum(b"\xAB") == ones_complement_sum(b"\xAB\x00")

    @given(st.binary(min_size=0, max_size=64))
    def test_matches_independent_oracle(self, data):
        assert ones_complement_sum(data) == oracle_fold_sum(data)

    @given(st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=20),
           st.randoms(use_true_random=False))
    def test_word_permutation_invariance(self, words, rnd):
        data = b"".join(struct.pack(">H", w) for w in words)
        shuffled = list(words)
        rnd.shuffle(shuffled)
        data2 = b"".join(struct.pack(">H", w) for w in shuffled)
        assert ones_complement_sum(data) == ones_complement_sum(data2)


class TestSitpChecksum:
    def test_all_zero_header_gets_zero_avoidance(self):
        header = SitpHeader(0, 0, 0)
        pseudo = PseudoHeader(0, 0, 0, 0)
        assert compute_sitp_checksum(header, pseudo) == 0xFFFF
        filled = header.with_checksum(0xFFFF)
        assert verify_sitp_header(filled.to_bits(), pseudo)

    def test_example_value_frozen_from_oracle(self):
        # Word-by-word oracle accumulation of pseudo + header gives 0x540D,
        # so the transmitted complement is 0xABF2.
        assert oracle_fold_sum(EXAMPLE_PSEUDO.to_bytes()
                               + EXAMPLE_HEADER.to_bytes()) == 0x540D
        assert compute_sitp_checksum(EXAMPLE_HEADER, EXAMPLE_PSEUDO) == 0xABF2

    def test_nonzero_checksum_field_ignored_during_compute(self):
        dirty = EXAMPLE_HEADER.with_checksum(0x1234)
        assert compute_sitp_checksum(dirty, EXAMPLE_PSEUDO) == 0xABF2

    @given(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF),
           st.integers(0, 0xFFFF), st.integers(0, 0xFFFFFFFF),
           st.integers(0, 0xFFFFFFFF), st.integers(0, 0xFF))
    def test_fill_then_verify_roundtrip(self, src, dst, length, saddr, daddr,
                                        proto):
        header = SitpHeader(src, dst, length)
        pseudo = PseudoHeader(saddr, daddr, proto, length)
        filled = header.with_checksum(compute_sitp_checksum(header, pseudo))
        assert verify_sitp_header(filled.to_bits(), pseudo)

    def test_every_single_bit_flip_detected(self):
        cksum = compute_sitp_checksum(EXAMPLE_HEADER, EXAMPLE_PSEUDO)
        bits = EXAMPLE_HEADER.with_checksum(cksum).to_bits()
        for i in range(64):
            corrupted = bits.copy()
            corrupted[i] ^= 1
            assert not verify_sitp_header(corrupted, EXAMPLE_PSEUDO), i

    def test_double_flips_match_oracle_recomputation(self):
        # Some double flips cancel under one's-complement addition; the
        # receiver verdict must equal a fresh oracle fold of the corrupted
        # bytes. Exhaustive over all 64*63/2 position pairs.
        cksum = compute_sitp_checksum(EXAMPLE_HEADER, EXAMPLE_PSEUDO)
        bits = EXAMPLE_HEADER.with_checksum(cksum).to_bits()
        pseudo_bytes = EXAMPLE_PSEUDO.to_bytes()
        collisions = 0
        for i in range(64):
            for j in range(i + 1, 64):
                corrupted = bits.copy()
                corrupted[i] ^= 1
                corrupted[j] ^= 1
                expected = oracle_fold_sum(
                    pseudo_bytes + np.packbits(corrupted).tobytes()) == 0xFFFF
                assert verify_sitp_header(corrupted, EXAMPLE_PSEUDO) == expected
                collisions += expected
        # flips of opposite-valued bits in the same column of two words cancel
        assert collisions > 0

    def test_verify_requires_64_bits(self):
        with pytest.raises(ValueError):
            verify_sitp_header(np.zeros(63, dtype=np.uint8), EXAMPLE_PSEUDO)


class TestHeaderSerialization:
    def test_sitp_header_layout(self):
        data = EXAMPLE_HEADER.with_checksum(0xABCD).to_bytes()
        assert len(data) == 8
        assert data == bytes.fromhex("1f901f910028abcd")
        assert SitpHeader.from_bytes(data) == EXAMPLE_HEADER.with_checksum(0xABCD)

    def test_pseudo_header_layout(self):
        data = EXAMPLE_PSEUDO.to_bytes()
        assert len(data) == 12
        assert data == bytes.fromhex("0a0000010a00000200990028")
        assert data[8] == 0  # zero pad byte

    def test_from_bytes_length_checked(self):
        with pytest.raises(ValueError):
            SitpHeader.from_bytes(b"\x00" * 7)


class TestCrc32:
    def test_check_value(self):
        result = crc_compute(bits_from_bytes(b"123456789"))
        assert int_from_bits(result) == 0xCBF43926
        assert result.size == 32

    def test_empty_input(self):
        assert int_from_bits(crc_compute(np.zeros(0, dtype=np.uint8))) == 0

    def test_unsupported_width(self):
        with pytest.raises(UnsupportedCrcWidth):
            crc_compute(bits_from_bytes(b"abc"), width=16)

    @given(st.binary(min_size=0, max_size=128))
    def test_matches_zlib_oracle(self, data):
        assert crc32_bytes(data) == zlib.crc32(data)

    @settings(max_examples=30)
    @given(st.binary(min_size=1, max_size=32))
    def test_single_bit_flips_always_detected(self, data):
        bits = bits_from_bytes(data)
        clean = int_from_bits(crc_compute(bits))
        for i in range(bits.size):
            corrupted = bits.copy()
            corrupted[i] ^= 1
            assert int_from_bits(crc_compute(corrupted)) != clean


class TestSyncDetect:
    def test_zero_distance(self):
        word = bits_from_bytes(b"\xA5")
        assert sync_detect(word, word, 0)

    def test_threshold_boundary(self):
        # 11-bit Barker word, three flips pass at tolerance 3, four do not.
        barker = np.array([1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0], dtype=np.uint8)
        three = barker.copy()
        three[:3] ^= 1
        four = barker.copy()
        four[:4] ^= 1
        assert sync_detect(three, barker, 3)
        assert not sync_detect(four, barker, 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sync_detect(np.zeros(4, dtype=np.uint8),
                        np.zeros(5, dtype=np.uint8), 1)

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=24),
           st.integers(0, 30))
    def test_self_match_and_tolerance_monotonicity(self, word, tol):
        word = np.array(word, dtype=np.uint8)
        assert sync_detect(word, word, tol)
        flipped = word ^ 1
        if sync_detect(flipped, word, tol):
            assert sync_detect(flipped, word, tol + 1)
