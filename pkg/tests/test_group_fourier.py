import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpflow.group_fourier import FourierBasis, GroupSpec, analyze_weights, character, synth_weights


class TestCharacter:
    def test_trivial_frequency_is_one(self):
        spec = GroupSpec(9)
        for g in range(9):
            assert character(spec, 0, g) == 1

    def test_quarter_turn(self):
        np.testing.assert_allclose(character(GroupSpec(4), 1, 1), 1j, atol=1e-15)

    def test_matches_stdlib_exponential(self):
        # independent route: cmath on the unreduced phase, which itself carries ~1e-15 error
        got = character(GroupSpec(7), 3, 5)
        want = cmath.exp(2j * math.pi * 15 / 7)
        assert abs(got - want) <= 1e-14
        assert abs(got - cmath.exp(2j * math.pi / 7)) <= 1e-15

    @pytest.mark.parametrize("k,g", [(-1, 0), (0, 7), (7, 1)])
    def test_out_of_range(self, k, g):
        with pytest.raises(ValueError):
            character(GroupSpec(7), k, g)

    def test_order_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            GroupSpec(1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n - 1), st.integers(0, n - 1), st.integers(0, n - 1))))
    def test_multiplicative(self, args):
        n, k, g, h = args
        spec = GroupSpec(n)
        lhs = character(spec, k, spec.op(g, h))
        assert abs(lhs - character(spec, k, g) * character(spec, k, h)) <= 1e-12


class TestFourierBasis:
    @pytest.mark.parametrize("n", [2, 3, 5, 8, 17, 32])
    def test_orthogonality(self, n):
        for scale in (1.0, 0.5):
            F = FourierBasis(n, scale).matrix
            np.testing.assert_allclose(F.conj().T @ F, scale**2 * n * np.eye(n), atol=1e-10)

    def test_columns_match_characters(self):
        b = FourierBasis(6)
        spec = GroupSpec(6)
        for k in range(6):
            np.testing.assert_allclose(b.column(k), [character(spec, k, g) for g in range(6)], atol=1e-14)

    def test_matrix_is_read_only(self):
        with pytest.raises(ValueError):
            FourierBasis(3).matrix[0, 0] = 2

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            FourierBasis(3, 0.0)


class TestSynthesis:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 16), st.integers(0, 2**31))
    def test_round_trip(self, n, seed):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(n - 1) + 1j * rng.standard_normal(n - 1)
        b = FourierBasis(n, 0.7)
        back = analyze_weights(b, synth_weights(b, c))
        assert abs(back[0]) <= 1e-12
        np.testing.assert_allclose(back[1:], c, atol=1e-12)

    def test_single_frequency(self):
        b = FourierBasis(5)
        w = synth_weights(b, [0, 1, 0, 0])
        np.testing.assert_allclose(w, b.column(2))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            synth_weights(FourierBasis(5), [1, 2])

    def test_conjugate_symmetric_coefficients_give_real_weights(self):
        n = 7
        rng = np.random.default_rng(1)
        c = rng.standard_normal(n - 1) + 1j * rng.standard_normal(n - 1)
        c = 0.5 * (c + np.conj(c[::-1]))
        assert np.max(np.abs(synth_weights(FourierBasis(n), c).imag)) <= 1e-12
