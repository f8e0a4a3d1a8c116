"""Fixed-point residue encoding tests."""

import random

import pytest

from decoyctl import fixed_point as fp

N = 2**61 - 1  # any odd modulus comfortably larger than the encoded ranges


class TestRounding:
    def test_half_away_from_zero(self):
        assert fp.round_half_away(0.5) == 1
        assert fp.round_half_away(-0.5) == -1
        assert fp.round_half_away(1.5) == 2
        assert fp.round_half_away(2.5) == 3  # not banker's rounding
        assert fp.round_half_away(-2.5) == -3
        assert fp.round_half_away(0.49999) == 0
        assert fp.round_half_away(-0.49999) == 0

    def test_symmetry(self):
        rng = random.Random(0)
        for _ in range(500):
            x = rng.uniform(-100, 100)
            assert fp.round_half_away(-x) == -fp.round_half_away(x)


class TestEncodeDecode:
    def test_worked_examples(self):
        assert fp.encode_residue(0.075, fp.DELTA_DEFAULT, N) == 750
        assert fp.encode_residue(-3.0, fp.DELTA_DEFAULT, N) == N - 30000
        # Magnitudes below delta/2 vanish; exactly delta/2 rounds away from zero.
        assert fp.encode_residue(0.00005, fp.DELTA_DEFAULT, N) == 1
        assert fp.encode_residue(-0.00005, fp.DELTA_DEFAULT, N) == N - 1
        assert fp.encode_residue(0.00004, fp.DELTA_DEFAULT, N) == 0

    def test_decode_inverts_worked_examples(self):
        assert fp.decode_residue(750, fp.DELTA_DEFAULT, N) == pytest.approx(0.075)
        assert fp.decode_residue(N - 30000, fp.DELTA_DEFAULT, N) == pytest.approx(-3.0)
        assert fp.decode_residue(0, fp.DELTA_DEFAULT, N) == 0.0

    def test_signed_split_boundary(self):
        # Values up to floor(n/2) decode as non-negative, above as negative.
        assert fp.decode_residue(N // 2, 1.0, N) == float(N // 2)
        assert fp.decode_residue(N // 2 + 1, 1.0, N) == -float(N // 2)

    def test_roundtrip_error_at_most_half_delta(self):
        rng = random.Random(1)
        for _ in range(1000):
            x = rng.uniform(-50, 50)
            residue = fp.encode_residue(x, fp.DELTA_DEFAULT, N)
            back = fp.decode_residue(residue, fp.DELTA_DEFAULT, N)
            assert abs(back - x) <= fp.DELTA_DEFAULT / 2 + 1e-15

    def test_grid_points_roundtrip_exactly(self):
        rng = random.Random(2)
        for _ in range(200):
            m = rng.randrange(-10**6, 10**6)
            x = m * fp.DELTA_DEFAULT
            assert fp.encode_residue(x, fp.DELTA_DEFAULT, N) == m % N

    def test_range_guard(self):
        with pytest.raises(OverflowError):
            fp.encode_residue(float(N), 1.0, N)
        with pytest.raises(ValueError):
            fp.encode_residue(float("nan"), fp.DELTA_DEFAULT, N)
        with pytest.raises(ValueError):
            fp.encode_residue(float("inf"), fp.DELTA_DEFAULT, N)

    def test_decode_rejects_out_of_range_residue(self):
        with pytest.raises(ValueError):
            fp.decode_residue(-1, fp.DELTA_DEFAULT, N)
        with pytest.raises(ValueError):
            fp.decode_residue(N, fp.DELTA_DEFAULT, N)

    def test_max_representable(self):
        assert fp.max_representable(fp.DELTA_DEFAULT, N) == (N // 2) * fp.DELTA_DEFAULT


class TestScaleComposition:
    def test_gain_times_signal_decodes_at_squared_scale(self):
        delta = fp.DELTA_DEFAULT
        gain = fp.encode_residue(4.0, delta, N)
        signal = fp.encode_residue(0.5, delta, N)
        assert gain == 40000 and signal == 5000
        product = (gain * signal) % N
        assert fp.decode_residue(product, delta * delta, N) == pytest.approx(2.0)

    def test_negative_gain_times_signal(self):
        delta = fp.DELTA_DEFAULT
        gain = fp.encode_residue(-0.15, delta, N)
        assert gain == N - 1500
        signal = fp.encode_residue(2.0, delta, N)
        product = (gain * signal) % N
        assert fp.decode_residue(product, delta * delta, N) == pytest.approx(-0.3)

    def test_six_term_budget_fits_half_modulus(self):
        # Worst-case inner product of the controller: six products of a
        # gain (|g| <= 4) and a signal (|s| <= 100) at delta = 1e-4.
        delta = fp.DELTA_DEFAULT
        worst = 6 * fp.encode_residue(4.0, delta, N) * fp.encode_residue(100.0, delta, N)
        n_production = 2**1022  # smallest modulus from 512-bit primes
        assert worst < n_production // 2


class TestRequantize:
    def test_squared_scale_back_to_base(self):
        delta = fp.DELTA_DEFAULT
        x = 1.2345
        fine = fp.encode_residue(x, delta * delta, N)
        coarse = fp.requantize(fine, delta * delta, delta, N)
        assert coarse == fp.encode_residue(x, delta, N)

    def test_negative_values(self):
        delta = fp.DELTA_DEFAULT
        fine = fp.encode_residue(-0.075, delta * delta, N)
        assert fp.requantize(fine, delta * delta, delta, N) == N - 750

    def test_randomized_against_direct_encoding(self):
        delta = fp.DELTA_DEFAULT
        rng = random.Random(3)
        for _ in range(300):
            m = rng.randrange(-10**9, 10**9)
            fine = m % N
            x = m * (delta * delta)
            assert fp.requantize(fine, delta * delta, delta, N) == fp.encode_residue(
                x, delta, N
            )

    def test_rejects_bad_residue(self):
        with pytest.raises(ValueError):
            fp.requantize(N, 1e-8, 1e-4, N)


class TestVectors:
    def test_roundtrip(self):
        delta = fp.DELTA_DEFAULT
        values = (0.075, -3.0, 0.0)
        residues = fp.encode_vector(values, delta, N)
        assert residues == (750, N - 30000, 0)
        assert fp.decode_vector(residues, delta, N) == pytest.approx(values)
