import numpy as np
import pytest

from mpflow.dynamics import (
    FlowConfig,
    FlowDiverged,
    HermiteFamily,
    SeparableLoss,
    decoupling_report,
    exp_fit,
    gram_matrix,
    initial_particles,
    integrate,
    potentials,
    symmetry_diagnostic,
    velocity_field,
)
from mpflow.hermite import hermite_eval, hermite_grad

TRIPLE = HermiteFamily([(1, 1, 1)])


def loop_grads(family, Z):
    return np.array([[hermite_grad(a, z) for a in family.indices] for z in Z])


class TestFamily:
    def test_values_and_grads_match_pointwise_routes(self):
        fam = HermiteFamily([(1, 1, 0), (2, 0, 1), (0, 3, 0), (0, 0, 0)])
        Z = np.random.default_rng(0).normal(size=(7, 3))
        want = np.array([[hermite_eval(a, z) for a in fam.indices] for z in Z])
        np.testing.assert_allclose(fam.values(Z), want, atol=1e-12)
        np.testing.assert_allclose(fam.grads(Z), loop_grads(fam, Z), atol=1e-12)

    def test_mixed_dimensions(self):
        with pytest.raises(ValueError):
            HermiteFamily([(1, 1), (1, 1, 1)])

    def test_empty(self):
        with pytest.raises(ValueError):
            HermiteFamily([])


class TestVelocity:
    def test_triple_product_at_zero_potential(self):
        loss = SeparableLoss.quadratic_target(TRIPLE, [1.0])
        z = np.array([0.5, -2.0, 3.0])
        v = velocity_field(loss, [0.0], z)
        np.testing.assert_allclose(v, -2 * np.array([z[1] * z[2], z[0] * z[2], z[0] * z[1]]))

    def test_batched_matches_single(self):
        loss = SeparableLoss.quadratic_target(TRIPLE, [1.0])
        Z = np.random.default_rng(1).normal(size=(4, 3))
        batch = velocity_field(loss, [0.3], Z)
        for p in range(4):
            np.testing.assert_allclose(batch[p], velocity_field(loss, [0.3], Z[p]))

    def test_potentials_are_particle_means(self):
        Z = np.random.default_rng(2).normal(size=(9, 3))
        assert potentials(Z, TRIPLE)[0] == pytest.approx(np.mean(np.prod(Z, axis=1)))

    def test_target_shape(self):
        with pytest.raises(ValueError):
            SeparableLoss.quadratic_target(TRIPLE, [1.0, 2.0])

    def test_quadratic_form_derivatives(self):
        fam = HermiteFamily([(1, 0), (0, 1)])
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        loss = SeparableLoss.quadratic_form(fam, Q, [1.0, -1.0], 3.0)
        r = np.array([0.2, -0.4])
        assert loss.value(r) == pytest.approx(0.5 * r @ Q @ r + r[0] - r[1] + 3)
        np.testing.assert_allclose(loss.grad(r), Q @ r + [1, -1])


class TestGram:
    def test_origin_is_zero_for_the_triple(self):
        assert gram_matrix(np.zeros((3, 3)), TRIPLE)[0, 0] == 0

    def test_hand_value(self):
        z = np.array([[1.0, 2.0, 3.0]])
        # |grad z1 z2 z3|^2 = 36 + 9 + 4
        assert gram_matrix(z, TRIPLE)[0, 0] == pytest.approx(49.0)

    def test_duplicate_member_gives_equal_entries(self):
        fam = HermiteFamily([(1, 1, 1), (1, 1, 1)])
        G = gram_matrix(np.random.default_rng(3).normal(size=(20, 3)), fam)
        assert G[0, 1] == pytest.approx(G[0, 0])

    def test_chunking_does_not_change_the_result(self):
        fam = HermiteFamily([(1, 1, 0), (0, 1, 1)])
        Z = np.random.default_rng(4).normal(size=(1000, 3))
        G1, s1 = gram_matrix(Z, fam, stderr=True, chunk=7)
        G2, s2 = gram_matrix(Z, fam, stderr=True, chunk=5000)
        np.testing.assert_allclose(G1, G2, rtol=1e-12)
        np.testing.assert_allclose(s1, s2, rtol=1e-9)

    def test_disjoint_monomials_are_orthogonal(self):
        fam = HermiteFamily([(1, 1, 1, 0, 0, 0), (0, 0, 0, 1, 1, 1)])
        G, se = gram_matrix(np.random.default_rng(5).normal(size=(100_000, 6)), fam, stderr=True)
        assert G[0, 1] == 0 and se[0, 1] == 0
        assert G[0, 0] == pytest.approx(3.0, rel=0.03)

    def test_overlapping_monomials_correlate_under_a_gaussian(self):
        # E[grad z1z2 . grad z1z3] = E[z2 z3] = 0 at N(0, I), within its error bar
        fam = HermiteFamily([(1, 1, 0), (1, 0, 1)])
        G, se = gram_matrix(np.random.default_rng(6).normal(size=(50_000, 3)), fam, stderr=True)
        assert abs(G[0, 1]) <= 5 * se[0, 1]


class TestSymmetry:
    def test_symmetrized_cloud_scores_zero(self):
        cfg = FlowConfig(q=200, d=3, dt=0.1, steps=0, symmetrize_init=True)
        assert symmetry_diagnostic(initial_particles(cfg)) == pytest.approx(0.0, abs=1e-6)

    def test_shifted_cloud_is_flagged(self):
        Z = np.random.default_rng(7).normal(size=(500, 3)) + 1.0
        assert symmetry_diagnostic(Z) > 10


class TestIntegrate:
    def loss(self):
        return SeparableLoss.quadratic_target(TRIPLE, [1.0])

    def test_zero_steps(self):
        traj = integrate(self.loss(), FlowConfig(q=10, d=3, dt=0.1, steps=0, seed=1))
        assert traj.times == [0.0] and traj.steps_taken == 0

    def test_h_decreases(self):
        traj = integrate(self.loss(), FlowConfig(q=64, d=3, dt=0.01, steps=200, seed=2, record_every=10))
        assert traj.energy[-1] < traj.energy[0]
        assert np.all(np.diff(traj.energy) <= 1e-12)
        assert len(traj.times) == 21

    def test_first_step_slope(self):
        loss = self.loss()
        cfg = FlowConfig(q=32, d=3, dt=1e-5, steps=1, seed=3)
        Z0 = initial_particles(cfg)
        traj = integrate(loss, cfg, Z0=Z0)
        rho0 = potentials(Z0, TRIPLE)
        G0 = gram_matrix(Z0, TRIPLE)
        rate = (traj.rho[1] - traj.rho[0]) / cfg.dt
        # a single family member: the decoupled law is exact to first order
        np.testing.assert_allclose(rate, -G0[0, 0] * loss.grad(rho0), rtol=1e-3)

    def test_euler_is_first_order(self):
        loss = self.loss()
        base = dict(q=16, d=3, seed=4, record_gram=False, symmetry_degree=0)
        T = 0.2
        ref = integrate(loss, FlowConfig(dt=T / 400, steps=400, integrator="rk4", **base)).final
        errs = []
        for n in (20, 40, 80):
            Z = integrate(loss, FlowConfig(dt=T / n, steps=n, **base)).final
            errs.append(np.max(np.abs(Z - ref)))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)

    def test_particle_permutation_invariance(self):
        loss = SeparableLoss.quadratic_target(HermiteFamily([(1, 1, 0), (0, 1, 1)]), [0.5, -0.5])
        cfg = FlowConfig(q=30, d=3, dt=0.01, steps=50, seed=5)
        Z0 = initial_particles(cfg)
        perm = np.random.default_rng(0).permutation(30)
        a = integrate(loss, cfg, Z0=Z0)
        b = integrate(loss, cfg, Z0=Z0[perm])
        np.testing.assert_allclose(b.final, a.final[perm], atol=1e-12)
        np.testing.assert_allclose(b.energy, a.energy, rtol=1e-10)

    def test_duplicating_particles_changes_nothing(self):
        # the flow depends on the empirical measure only
        loss = self.loss()
        cfg = FlowConfig(q=12, d=3, dt=0.01, steps=40, seed=6)
        Z0 = initial_particles(cfg)
        a = integrate(loss, cfg, Z0=Z0)
        b = integrate(loss, FlowConfig(q=24, d=3, dt=0.01, steps=40), Z0=np.concatenate([Z0, Z0]))
        np.testing.assert_allclose(b.energy, a.energy, rtol=1e-10)

    def test_divergence_guard_keeps_the_partial_trajectory(self):
        loss = self.loss()
        cfg = FlowConfig(q=8, d=3, dt=5.0, steps=50, seed=7, init_scale=3.0)
        with pytest.raises(FlowDiverged) as info:
            integrate(loss, cfg)
        assert info.value.trajectory is not None
        assert info.value.trajectory.steps_taken >= 1

    def test_observer_columns(self):
        traj = integrate(self.loss(), FlowConfig(q=8, d=3, dt=0.01, steps=3), observer=lambda Z, rho: {"norm": float(np.sum(Z**2))})
        assert len(traj.extras["norm"]) == 4

    def test_shape_check(self):
        with pytest.raises(ValueError):
            integrate(self.loss(), FlowConfig(q=8, d=3, dt=0.1, steps=1), Z0=np.zeros((8, 2)))

    @pytest.mark.parametrize("kw", [dict(dt=0), dict(q=0), dict(integrator="leapfrog"), dict(record_every=0)])
    def test_config_validation(self, kw):
        base = dict(q=4, d=3, dt=0.1, steps=1)
        base.update(kw)
        with pytest.raises(ValueError):
            FlowConfig(**base)


class TestDecoupling:
    def test_disjoint_family_decouples(self):
        fam = HermiteFamily([(1, 1, 1, 0, 0, 0), (0, 0, 0, 1, 1, 1)])
        loss = SeparableLoss.quadratic_target(fam, [1.0, 1.0])
        traj = integrate(loss, FlowConfig(q=256, d=6, dt=1e-3, steps=100, seed=8, record_every=10))
        rep = decoupling_report(traj, loss)
        assert np.all(rep.cross_ok)
        assert rep.max_cross == 0.0

    def test_requires_gram(self):
        loss = SeparableLoss.quadratic_target(TRIPLE, [1.0])
        traj = integrate(loss, FlowConfig(q=4, d=3, dt=0.1, steps=1, record_gram=False))
        with pytest.raises(ValueError):
            decoupling_report(traj, loss)


class TestExpFit:
    def test_exact_round_trip(self):
        t = np.linspace(0, 3, 30)
        fit = exp_fit(1 - np.exp(-0.7 * t), t)
        assert fit.defined and fit.rate == pytest.approx(0.7, rel=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_constant_series_is_undefined(self):
        fit = exp_fit(np.zeros(12), np.linspace(0, 1, 12))
        assert not fit.defined

    def test_clipping_warns(self):
        t = np.linspace(0.1, 3, 12)
        rho = 1 - np.exp(-t)
        rho[-1] = 1.0
        with pytest.warns(RuntimeWarning):
            fit = exp_fit(rho, t)
        assert fit.clipped == 1 and fit.rate == pytest.approx(1.0, rel=1e-12)

    def test_too_short(self):
        with pytest.raises(ValueError):
            exp_fit(np.zeros(5), np.arange(5.0))


class TestSnapshots:
    def test_cadence_is_independent_of_recording(self):
        loss = SeparableLoss.quadratic_target(TRIPLE, [1.0])
        traj = integrate(loss, FlowConfig(q=4, d=3, dt=0.1, steps=40, record_every=4, snapshot_every=10))
        assert traj.snapshot_times == pytest.approx([0.0, 1.0, 2.0, 3.0, 4.0])

    def test_final_state_is_always_kept(self):
        loss = SeparableLoss.quadratic_target(TRIPLE, [1.0])
        traj = integrate(loss, FlowConfig(q=4, d=3, dt=0.1, steps=25, snapshot_every=10))
        assert traj.snapshot_times == pytest.approx([0.0, 1.0, 2.0, 2.5])
        np.testing.assert_array_equal(traj.snapshots[-1], traj.final)
