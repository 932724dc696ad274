import numpy as np
import pytest

from mpflow.dynamics import FlowConfig, HermiteFamily, SeparableLoss, integrate
from mpflow.potentials import abelian_loss
from mpflow.spectrum import (
    MAX_REDUCED_DIM,
    SpectrumFrame,
    duplicate_rows,
    frames_from_trajectory,
    inverse_iteration,
    kernel_matrix,
    quadform_monte_carlo,
    reduced_eigs,
    second_variation_quadform,
    second_variation_quadform_sum,
    symmetric_eigs_oracle,
    track_crossings,
)


def random_psd(m, seed):
    B = np.random.default_rng(seed).normal(size=(m, m))
    return B @ B.T / m


def random_sym(m, seed):
    B = np.random.default_rng(seed).normal(size=(m, m))
    return 0.5 * (B + B.T)


class TestKernel:
    def test_hand_value(self):
        fam = HermiteFamily([(1, 0), (1, 1)])
        Z = np.array([[1.0, 2.0], [3.0, -1.0]])
        K = kernel_matrix(Z, fam)
        # r = (z1, z1 z2): samples (1, 2) and (3, -3)
        np.testing.assert_allclose(K, [[5.0, -3.5], [-3.5, 6.5]])

    def test_duplicates_are_detected(self):
        fam = HermiteFamily([(1, 1, 0), (0, 1, 1), (1, 1, 0)])
        K = kernel_matrix(np.random.default_rng(0).normal(size=(50, 3)), fam)
        assert duplicate_rows(K) == [(0, 2)]

    def test_stderr_shape(self):
        fam = HermiteFamily([(1, 0), (0, 1)])
        K, se = kernel_matrix(np.random.default_rng(1).normal(size=(40, 2)), fam, stderr=True)
        assert se.shape == K.shape and np.all(se > 0)


class TestReducedEigs:
    def test_diagonal_example(self):
        r = reduced_eigs(np.diag([2.0, -1.0]), np.diag([3.0, 4.0]))
        np.testing.assert_allclose(r.values, [6.0, -4.0])
        assert r.rank == 2 and r.nonzero_count == 2

    def test_rank_deficient_kernel(self):
        K = np.ones((3, 3))
        r = reduced_eigs(np.eye(3), K)
        assert r.rank == 1 and r.nonzero_count == 1
        assert r.values[0].real == pytest.approx(3.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_symmetric_oracle(self, seed):
        m = 6
        A, K = random_sym(m, seed), random_psd(m, seed + 100)
        r = reduced_eigs(A, K)
        assert np.max(np.abs(r.values.imag)) <= 1e-10
        np.testing.assert_allclose(r.values.real, symmetric_eigs_oracle(A, K), atol=1e-10)
        assert np.max(r.residuals) <= 1e-10

    def test_matches_inverse_iteration(self):
        A, K = random_sym(5, 7), random_psd(5, 8)
        r = reduced_eigs(A, K)
        for lam in r.values.real:
            got, _ = inverse_iteration(A @ K, lam + 1e-3)
            # the Rayleigh quotient of a non-normal matrix is only close, not exact
            assert abs(got - lam) <= 0.05 * max(1.0, abs(lam))

    def test_size_limit(self):
        n = MAX_REDUCED_DIM + 1
        with pytest.raises(ValueError):
            reduced_eigs(np.eye(n), np.eye(n))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reduced_eigs(np.eye(2), np.eye(3))


class TestCrossings:
    def frames(self, series):
        return [SpectrumFrame(float(t), None, None, np.array(v, dtype=complex)) for t, v in enumerate(series)]

    def test_single_sign_change(self):
        rep = track_crossings(self.frames([[2.0, 1.0], [2.0, 0.5], [2.0, -0.5]]))
        assert len(rep.crossings) == 1
        assert rep.crossings[0].index == 1
        assert rep.crossings[0].t_cross == pytest.approx(1.5)

    def test_values_passing_through_zero_are_bridged(self):
        rep = track_crossings(self.frames([[1.0], [0.0], [-1.0]]))
        assert [c.t_cross for c in rep.crossings] == [pytest.approx(1.0)]

    def test_touching_zero_is_not_a_crossing(self):
        assert track_crossings(self.frames([[1.0], [0.0], [1.0]])).crossings == []

    def test_tracks_follow_nearest_values(self):
        # the solver's output order is not a label; matching keeps each track smooth
        rep = track_crossings(self.frames([[1.0, -1.0], [-0.9, 1.1], [1.2, -0.8]]))
        np.testing.assert_allclose(rep.tracks[:, 0].real, [1.0, 1.1, 1.2])
        assert rep.crossings == []

    def test_complex_frames(self):
        rep = track_crossings(self.frames([[1.0, 2.0], [1 + 0.1j, 1 - 0.1j]]))
        assert rep.complex_frames == [1]

    def test_ambiguous_jump(self):
        rep = track_crossings(self.frames([[4.0, 3.0, 2.0, 1.0], [2.5, 2.5, 2.5, 2.5]]))
        assert rep.ambiguous_frames == [1]

    def test_time_order_is_required(self):
        f = self.frames([[1.0], [2.0]])
        with pytest.raises(ValueError):
            track_crossings(f[::-1])

    def test_empty(self):
        assert track_crossings([]).crossings == []


class TestQuadform:
    @pytest.mark.parametrize("seed", range(4))
    def test_two_evaluation_orders_agree(self, seed):
        m = 5
        A, K = random_sym(m, seed), random_psd(m, seed + 1)
        c = np.random.default_rng(seed).normal(size=m)
        a = second_variation_quadform(c, A, K)
        b = second_variation_quadform_sum(c, A, K)
        assert abs(a - b) <= 1e-13 * max(1.0, abs(a))

    def test_eigenvector_gives_its_eigenvalue(self):
        A, K = random_sym(4, 3), random_psd(4, 4)
        r = reduced_eigs(A, K)
        # A K v = lam v gives (K v)^T A (K v) = lam v^T K v
        v = r.vectors[:, 0].real
        want = r.values[0].real * v @ K @ v
        assert second_variation_quadform(v, A, K) == pytest.approx(want, rel=1e-9)

    def test_monte_carlo_against_the_gaussian_kernel(self):
        fam = HermiteFamily([(1, 1, 0), (0, 1, 1), (2, 0, 0)])
        K = np.diag([float(i.norm_sq) for i in fam.indices])
        A = random_sym(3, 9)
        c = np.array([0.5, -1.0, 0.3])
        mc = quadform_monte_carlo(c, A, fam, 200_000, seed=2, exact_kernel=K)
        assert abs(mc.estimate - mc.exact) <= 5 * mc.std_error


class TestFromTrajectory:
    def test_frames_need_snapshots(self):
        loss = SeparableLoss.quadratic_target(HermiteFamily([(1, 1)]), [1.0])
        traj = integrate(loss, FlowConfig(q=4, d=2, dt=0.1, steps=1))
        with pytest.raises(ValueError):
            frames_from_trajectory(traj, loss)

    def test_abelian_hessian_is_constant(self):
        loss = abelian_loss(3)
        rng = np.random.default_rng(0)
        H1 = loss.hess(rng.normal(size=loss.m))
        H2 = loss.hess(rng.normal(size=loss.m))
        np.testing.assert_array_equal(H1, H2)
        np.testing.assert_allclose(H1, H1.T, atol=1e-14)

    def test_frames_follow_snapshots(self):
        loss = SeparableLoss.quadratic_target(HermiteFamily([(1, 1, 0), (0, 1, 1)]), [1.0, 0.5])
        traj = integrate(loss, FlowConfig(q=32, d=3, dt=0.01, steps=20, snapshot_every=5, seed=1))
        frames = frames_from_trajectory(traj, loss)
        assert [f.t for f in frames] == pytest.approx([0.0, 0.05, 0.1, 0.15, 0.2])
        assert all(np.max(f.residuals) <= 1e-10 for f in frames)
