import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpflow._numerics import central_difference
from mpflow.hermite import (
    HermiteIndex,
    gauss_hermite_expectation,
    gaussian_expectation,
    he,
    he_exact,
    he_table,
    hermite_eval,
    hermite_grad,
    multi_indices,
    parity_zero_check,
    recurrence_residual,
    table_deviation,
)
from mpflow.measure_algebra import WeightedMeasure


class TestUnivariate:
    @pytest.mark.parametrize("k,x,want", [(0, 3.0, 1.0), (1, -2.0, -2.0), (2, 3.0, 8.0), (3, 2.0, 2.0), (4, 1.0, -2.0)])
    def test_hand_values(self, k, x, want):
        assert he(k, x) == pytest.approx(want)

    def test_table_matches_exact_coefficients(self):
        assert table_deviation(12, np.linspace(-4, 4, 17)) <= 1e-12

    def test_recurrence(self):
        assert recurrence_residual(10, np.linspace(-3, 3, 13)) <= 1e-9

    def test_exact_route_is_not_the_table(self):
        # numpy's own Hermite_e series gives a third evaluation route
        x = 1.7
        for k in range(8):
            c = np.zeros(k + 1)
            c[k] = 1
            assert he_exact(k, x) == pytest.approx(np.polynomial.hermite_e.hermeval(x, c), rel=1e-12)

    def test_parity(self):
        x = np.linspace(0.1, 2, 5)
        t = he_table(x, 7)
        for k in range(8):
            np.testing.assert_allclose(he(k, -x), (-1) ** k * t[k], rtol=1e-13)


class TestMultiIndex:
    def test_from_monomial(self):
        assert HermiteIndex.from_monomial([0, 2], 4).alpha == (1, 0, 1, 0)

    def test_from_monomial_out_of_range(self):
        with pytest.raises(IndexError):
            HermiteIndex.from_monomial([4], 4)

    def test_negative_entry(self):
        with pytest.raises(ValueError):
            HermiteIndex((1, -1))
        with pytest.raises(ValueError):
            HermiteIndex((0, 1)).lowered(0)

    def test_norm(self):
        assert HermiteIndex((2, 3, 0)).norm_sq == 12

    def test_enumeration(self):
        idx = multi_indices(3, 2)
        assert len(idx) == math.comb(5, 3)
        assert all(a.degree <= 2 for a in idx)

    def test_monic_monomial_is_the_indicator_polynomial(self):
        z = np.random.default_rng(0).normal(size=(6, 3))
        np.testing.assert_allclose(hermite_eval((1, 0, 1), z), z[:, 0] * z[:, 2])

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            hermite_eval((1, 1), np.zeros(3))


class TestGradient:
    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=3), st.integers(0, 2**31))
    def test_finite_differences(self, alpha, seed):
        z = np.random.default_rng(seed).uniform(-1.5, 1.5, size=len(alpha))
        g = hermite_grad(alpha, z)
        fd = central_difference(lambda x: float(hermite_eval(alpha, x)), z)
        np.testing.assert_allclose(g, fd, atol=1e-6 * max(1.0, np.max(np.abs(g))))

    def test_batched_shape(self):
        assert hermite_grad((2, 1), np.zeros((5, 2))).shape == (5, 2)


class TestOrthogonality:
    PAIRS = [((1, 0), (1, 0)), ((2, 1), (2, 1)), ((1, 1), (2, 0)), ((3, 0), (1, 0)), ((0, 2), (0, 0))]

    @pytest.mark.parametrize("a,b", PAIRS)
    def test_quadrature(self, a, b):
        got = gauss_hermite_expectation(lambda z: hermite_eval(a, z) * hermite_eval(b, z), 2)
        want = HermiteIndex(a).norm_sq if a == b else 0.0
        assert got == pytest.approx(want, abs=1e-11)

    @pytest.mark.parametrize("a,b", PAIRS)
    def test_monte_carlo(self, a, b):
        r = gaussian_expectation(lambda z: hermite_eval(a, z) * hermite_eval(b, z), 2, 100_000, seed=4)
        assert r.within(HermiteIndex(a).norm_sq if a == b else 0.0)

    def test_constant_integrand_has_no_error_bar(self):
        r = gaussian_expectation(lambda z: np.ones(len(z)), 3, 10, seed=0)
        assert (r.mean, r.std_error) == (1.0, 0.0)

    def test_shards_are_deterministic(self):
        f = lambda z: z[:, 0] ** 2
        a = gaussian_expectation(f, 2, 1001, seed=7, shards=3)
        b = gaussian_expectation(f, 2, 1001, seed=7, shards=3)
        assert a == b

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            gaussian_expectation(lambda z: z[:, 0], 1, 1, seed=0)

    def test_quadrature_dimension_limit(self):
        with pytest.raises(ValueError):
            gauss_hermite_expectation(lambda z: z[:, 0], 4)


class TestParity:
    def symmetric(self, d=3, q=50, seed=0):
        return WeightedMeasure.empirical(np.random.default_rng(seed).normal(size=(q, d))).symmetrized()

    def test_odd_total_degree_vanishes(self):
        r = parity_zero_check((1, 1, 1), (1, 0, 1), (0, 1, 1), 0, 1, self.symmetric())
        assert r.predicted_zero and r.total_degree == 3
        assert abs(r.value) <= 1e-13

    def test_even_total_degree_is_not_forced(self):
        r = parity_zero_check((1, 1, 0), (1, 1, 0), (0, 1, 1), 0, 1, self.symmetric())
        assert not r.predicted_zero
        assert abs(r.value) > 1e-3

    def test_asymmetric_measure_breaks_the_zero(self):
        mu = WeightedMeasure.empirical(np.random.default_rng(1).normal(size=(50, 3)) + 0.5)
        r = parity_zero_check((1, 1, 1), (1, 0, 1), (0, 1, 1), 0, 1, mu)
        assert abs(r.value) > 1e-3

    def test_invalid_lowering(self):
        with pytest.raises(ValueError):
            parity_zero_check((0, 1, 0), (1, 0, 0), (0, 1, 0), 0, 1, self.symmetric())
