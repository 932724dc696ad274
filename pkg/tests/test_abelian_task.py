import numpy as np
import pytest

from mpflow._numerics import central_difference
from mpflow.abelian_task import (
    Normalization,
    ParticleSystem,
    TaskBatch,
    direct_loss,
    forward,
    forward_complex,
    loss_gradient,
)
from mpflow.group_fourier import FourierBasis


def hand_forward(ps, basis, a1, a2):
    """Loop oracle: weights synthesized one hidden unit at a time."""
    n = ps.n
    out = np.zeros(n, dtype=complex)
    for j in range(ps.q):
        wa = sum(ps.coeffs[j, 0, k - 1] * basis.column(k) for k in range(1, n))
        wb = sum(ps.coeffs[j, 1, k - 1] * basis.column(k) for k in range(1, n))
        wc = sum(ps.coeffs[j, 2, k - 1] * basis.column(k).conj() for k in range(1, n))
        out += wc * (wa[a1] + wb[a2]) ** 2
    return out / ps.q


def hand_loss(ps, basis, c_norm):
    n = ps.n
    total = 0.0
    for a1 in range(n):
        for a2 in range(n):
            r = hand_forward(ps, basis, a1, a2) / (2 * n)
            r[(a1 + a2) % n] -= 1
            r = r - r.mean()
            total += np.sum(np.abs(r) ** 2)
    return c_norm * total


class TestForward:
    @pytest.mark.parametrize("n,q", [(3, 1), (5, 4), (4, 3)])
    def test_matches_loop_oracle(self, n, q):
        ps = ParticleSystem.random(n, q, seed=n * 10 + q)
        b = FourierBasis(n)
        for a1, a2 in [(0, 0), (1, n - 1), (n - 1, 2 % n)]:
            np.testing.assert_allclose(forward_complex(ps, b, a1, a2), hand_forward(ps, b, a1, a2), atol=1e-12)
            np.testing.assert_allclose(forward(ps, b, a1, a2), hand_forward(ps, b, a1, a2).real, atol=1e-12)

    def test_zero_parameters_give_zero_output(self):
        ps = ParticleSystem.zeros(5, 3)
        assert np.all(forward(ps, FourierBasis(5), 2, 3) == 0)

    def test_conjugate_symmetric_output_is_real(self):
        ps = ParticleSystem.random(7, 6, seed=2, conjugate_symmetric=True)
        out = forward_complex(ps, FourierBasis(7), 3, 4)
        assert np.max(np.abs(out.imag)) <= 1e-12

    def test_element_out_of_range(self):
        with pytest.raises(IndexError):
            forward(ParticleSystem.zeros(3, 1), FourierBasis(3), 3, 0)

    def test_basis_order_mismatch(self):
        with pytest.raises(ValueError):
            forward(ParticleSystem.zeros(3, 1), FourierBasis(5), 0, 0)


class TestLoss:
    @pytest.mark.parametrize("n", [2, 3, 5, 7, 11])
    def test_zero_parameter_value(self, n):
        h = direct_loss(ParticleSystem.zeros(n, 2), FourierBasis(n), Normalization.mean_over_pairs(n))
        assert abs(h - (n - 1) / n) <= 1e-12

    @pytest.mark.parametrize("n,q", [(3, 2), (5, 3)])
    def test_matches_loop_oracle(self, n, q):
        ps = ParticleSystem.random(n, q, seed=7)
        b = FourierBasis(n)
        np.testing.assert_allclose(direct_loss(ps, b), hand_loss(ps, b, 1 / n**2), rtol=1e-12)

    def test_particle_permutation_invariance(self):
        ps = ParticleSystem.random(5, 16, seed=3)
        perm = np.random.default_rng(0).permutation(16)
        shuffled = ParticleSystem(5, ps.coeffs[perm])
        b = FourierBasis(5)
        np.testing.assert_allclose(direct_loss(shuffled, b), direct_loss(ps, b), rtol=1e-13)

    def test_targets_are_one_hot_sums(self):
        batch = TaskBatch.all_pairs(4)
        assert batch.targets.shape == (16, 4)
        np.testing.assert_array_equal(batch.targets.sum(axis=1), 1)
        row = np.flatnonzero((batch.pairs == [3, 2]).all(axis=1))[0]
        assert batch.targets[row, 1] == 1


class TestGradient:
    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        n = 3 + 2 * (seed % 2)
        ps = ParticleSystem.random(n, 2 + seed % 3, seed=seed, scale=0.8)
        b, norm = FourierBasis(n), Normalization.mean_over_pairs(n)
        g = loss_gradient(ps, b, norm)
        fd = central_difference(lambda x: direct_loss(ParticleSystem.from_real(n, x), b, norm), ps.to_real())
        assert np.max(np.abs(fd - g)) <= 1e-6 * np.max(np.abs(g))

    def test_zero_parameters_are_stationary(self):
        g = loss_gradient(ParticleSystem.zeros(5, 3), FourierBasis(5))
        assert np.all(g == 0)


class TestParticleSystem:
    def test_real_round_trip(self):
        ps = ParticleSystem.random(5, 4, seed=1)
        back = ParticleSystem.from_real(5, ps.to_real())
        np.testing.assert_array_equal(back.coeffs, ps.coeffs)

    def test_json_round_trip(self, tmp_path):
        ps = ParticleSystem.random(4, 3, seed=9)
        ps.save(tmp_path / "p.json")
        back = ParticleSystem.load(tmp_path / "p.json")
        np.testing.assert_array_equal(back.coeffs, ps.coeffs)
        assert back.seed == 9

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            ParticleSystem(3, np.zeros((2, 3, 3)))
        with pytest.raises(ValueError):
            ParticleSystem(3, np.full((1, 3, 2), np.nan))

    def test_same_seed_same_draw(self):
        a = ParticleSystem.random(5, 4, seed=11)
        b = ParticleSystem.random(5, 4, seed=11)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)

    def test_conjugate_symmetrization_is_a_projection(self):
        ps = ParticleSystem.random(6, 3, seed=4)
        once = ps.conjugate_symmetrized()
        np.testing.assert_allclose(once.conjugate_symmetrized().coeffs, once.coeffs, atol=1e-15)
