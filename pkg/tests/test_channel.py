import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitpsim.channel import (BitChannel, ber_from_snr, bit_snr_from_symbol_snr,
                             db_to_linear, flip_bits, linear_to_db, qam_awgn_ber,
                             qfunc, snr_at)
from sitpsim.config import BurstSchedule

mpmath.mp.dps = 40


def qfunc_oracle(x):
    return float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)


class TestQfunc:
    def test_at_zero(self):
        assert qfunc(0.0) == 0.5

    def test_symmetry(self):
        for x in (0.3, 1.7, 4.2):
            assert qfunc(x) + qfunc(-x) == pytest.approx(1.0, abs=1e-15)

    def test_reference_point(self):
        assert qfunc(4.4721) == pytest.approx(3.8727595e-06, rel=1e-6)

    def test_against_erfc_oracle_over_range(self):
        for x in np.linspace(-8.0, 8.0, 81):
            expected = qfunc_oracle(x)
            assert qfunc(float(x)) == pytest.approx(expected, rel=1e-12)


class TestBerFromSnr:
    def test_qpsk_at_zero_snr(self):
        # (4/2)(1 - 1/2) Q(0) = 1 * 0.5
        assert ber_from_snr(0.0, 4) == pytest.approx(0.5)

    def test_qpsk_reduces_to_q_sqrt_2gamma(self):
        # exact erfc oracle at 10 dB
        assert ber_from_snr(10.0, 4) == pytest.approx(
            qfunc_oracle(math.sqrt(20.0)), rel=1e-12)

    def test_order_monotonicity_at_fixed_bit_snr(self):
        gamma = db_to_linear(9.0)
        assert ber_from_snr(gamma, 64) > ber_from_snr(gamma, 16) \
            > ber_from_snr(gamma, 4)

    def test_strictly_decreasing_in_snr(self):
        for order in (4, 16, 64):
            values = [ber_from_snr(g, order)
                      for g in np.linspace(0.1, 60.0, 40)]
            assert all(a > b for a, b in zip(values, values[1:]))

    def test_never_exceeds_half(self):
        # prefactor * Q(0) peaks at 0.5 (QPSK); higher orders peak lower
        assert ber_from_snr(0.0, 4) == 0.5
        assert ber_from_snr(1e-9, 16) == pytest.approx(0.375, rel=1e-4)
        assert ber_from_snr(1e-9, 64) == pytest.approx(0.5 * 7 / 12, rel=1e-4)
        for order in (4, 16, 64):
            assert all(ber_from_snr(g, order) <= 0.5
                       for g in np.linspace(0.0, 5.0, 50))

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            ber_from_snr(1.0, 8)


class TestBitSnr:
    def test_divide_by_bits_per_symbol(self):
        assert bit_snr_from_symbol_snr(4.0, 4) == 2.0
        assert bit_snr_from_symbol_snr(24.0, 64) == 4.0

    @given(st.floats(min_value=-40.0, max_value=40.0))
    def test_db_roundtrip(self, db):
        assert linear_to_db(db_to_linear(db)) == pytest.approx(db, abs=1e-12)


class TestFlipBits:
    def test_ber_zero_identity(self):
        bits = np.array([0, 1, 1, 0] * 8, dtype=np.uint8)
        out = flip_bits(bits, BitChannel.from_seed(0.0, 1))
        assert np.array_equal(out, bits)

    def test_ber_one_inverts(self):
        bits = np.array([0, 1] * 16, dtype=np.uint8)
        out = flip_bits(bits, BitChannel.from_seed(1.0, 1))
        assert np.array_equal(out, bits ^ 1)

    def test_flip_fraction_concentration(self):
        n = 10 ** 6
        bits = np.zeros(n, dtype=np.uint8)
        out = flip_bits(bits, BitChannel.from_seed(0.1, 42))
        fraction = out.mean()
        assert abs(fraction - 0.1) <= 3 * math.sqrt(0.1 * 0.9 / n)

    def test_seed_reproducibility(self):
        bits = np.zeros(4096, dtype=np.uint8)
        a = flip_bits(bits, BitChannel.from_seed(0.3, 7, 1))
        b = flip_bits(bits, BitChannel.from_seed(0.3, 7, 1))
        c = flip_bits(bits, BitChannel.from_seed(0.3, 7, 2))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_state_advances_between_calls(self):
        channel = BitChannel.from_seed(0.5, 3)
        bits = np.zeros(256, dtype=np.uint8)
        assert not np.array_equal(flip_bits(bits, channel),
                                  flip_bits(bits, channel))

    def test_invalid_ber(self):
        with pytest.raises(ValueError):
            BitChannel.from_seed(1.5, 0)


class TestSnrAt:
    SCHED = BurstSchedule(gamma_high_db=15.0, gamma_low_db=7.0, t1=100,
                          t2=300, total_packets=1000)

    def test_piecewise_levels(self):
        assert snr_at(0, self.SCHED) == 15.0
        assert snr_at(99, self.SCHED) == 15.0
        assert snr_at(100, self.SCHED) == 7.0  # half-open start
        assert snr_at(299, self.SCHED) == 7.0
        assert snr_at(300, self.SCHED) == 15.0  # half-open end
        assert snr_at(1000, self.SCHED) == 15.0

    def test_empty_fade(self):
        sched = BurstSchedule(t1=50, t2=50, total_packets=100)
        assert all(snr_at(t, sched) == sched.gamma_high_db
                   for t in range(101))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            snr_at(1001, self.SCHED)
        with pytest.raises(ValueError):
            snr_at(-1, self.SCHED)


class TestQamAwgn:
    def test_noiseless_limit(self):
        es_n0 = db_to_linear(60.0)
        assert qam_awgn_ber(16, es_n0, 10 ** 6, seed=1) == 0.0

    def test_qpsk_matches_formula_at_10db(self):
        ebn0 = db_to_linear(10.0)
        measured = qam_awgn_ber(4, ebn0 * 2, 10 ** 7, seed=2)
        analytic = ber_from_snr(ebn0, 4)
        assert measured == pytest.approx(analytic, rel=0.30)

    def test_monotone_in_snr(self):
        low = qam_awgn_ber(16, db_to_linear(6.0) * 4, 10 ** 6, seed=3)
        high = qam_awgn_ber(16, db_to_linear(10.0) * 4, 10 ** 6, seed=3)
        assert low > high

    def test_nbits_alignment_checked(self):
        with pytest.raises(ValueError):
            qam_awgn_ber(64, 10.0, 100, seed=0)

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            qam_awgn_ber(32, 10.0, 1000, seed=0)

    def test_seed_reproducibility(self):
        args = (16, db_to_linear(8.0) * 4, 2 * 10 ** 5, 11)
        assert qam_awgn_ber(*args) == qam_awgn_ber(*args)
