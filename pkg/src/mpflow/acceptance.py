"""Acceptance criteria, one function each, returning a ``CriterionResult``.

A criterion passes when every check holds and it finished within its time
budget.  ``run_suite`` prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import hashlib
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import artifacts as art
from ._numerics import central_difference, make_rng
from .abelian_task import Normalization, ParticleSystem, direct_loss, loss_gradient
from .config import AbelianConfig, DecomposeCheckConfig, DecoupleConfig, HermiteCheckConfig, MaxEntConfig
from .dynamics import FlowConfig, HermiteFamily, SeparableLoss, decoupling_report, gram_matrix, initial_particles, integrate
from .group_fourier import FourierBasis
from .hermite import HermiteIndex
from .maxent import (
    MaxEntProblem,
    covariance,
    entropy_perturbations,
    log_partition,
    moments,
    normalization_adaptive,
    solve,
)
from .measure_algebra import MonomialSpec, WeightedMeasure, add, compose_check, mp_eval, mul
from .potentials import calibrate, decomposition_residual
from .spectrum import (
    SpectrumFrame,
    inverse_iteration,
    quadform_monte_carlo,
    reduced_eigs,
    symmetric_eigs_oracle,
    track_crossings,
)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    limit: float | None
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        budget = f"{self.seconds:.2f}s" + (f" / {self.limit:g}s" if self.limit else "")
        failed = [k for k, ok in self.checks.items() if not ok]
        tail = f"  failed: {', '.join(failed)}" if failed else ""
        return f"{'PASS' if self.passed else 'FAIL'} [{self.number:2d}] {self.title} ({budget}){tail}"


def _finish(number, title, limit, t0, checks, details) -> CriterionResult:
    seconds = time.perf_counter() - t0
    within = limit is None or seconds <= limit
    checks = dict(checks)
    checks["runtime"] = within
    return CriterionResult(number, title, all(checks.values()), seconds, limit, checks, details)


# ---------------------------------------------------------------------------


def criterion_1(seeds: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    worst = 0.0
    calibs = {}
    for n in (3, 5, 7):
        calib = calibrate(n)  # held-out draws, own seed
        calibs[n] = calib.to_json_dict()
        for q in (1, 2, 8, 64):
            for seed in range(seeds):
                r = decomposition_residual(ParticleSystem.random(n, q, 1000 + seed), calib)
                worst = max(worst, abs(r.delta) / (1 + abs(r.direct)))
    return _finish(1, "decomposition identity", 10, t0, {"residual<=1e-8(1+|H|)": worst <= 1e-8}, {"worst": worst, "calibration": calibs})


def criterion_2() -> CriterionResult:
    t0 = time.perf_counter()
    errs = {}
    for n in (3, 5, 7):
        for q in (1, 8):
            h = direct_loss(ParticleSystem.zeros(n, q), FourierBasis(n), Normalization.mean_over_pairs(n))
            errs[f"n={n},q={q}"] = abs(h - (n - 1) / n)
    worst = max(errs.values())
    return _finish(2, "zero-parameter anchor", None, t0, {"|H-(n-1)/n|<=1e-12": worst <= 1e-12}, {"errors": errs})


def _random_measure(rng, d, size, normalized=False):
    pts = rng.standard_normal((size, d))
    w = rng.uniform(0.1, 1.0, size)
    if normalized:
        w = w / w.sum()
    return WeightedMeasure(d, pts, w)


def criterion_3(instances: int = 200, seed: int = 3) -> CriterionResult:
    t0 = time.perf_counter()
    add_err = mul_err = dist_err = 0.0
    identity_exact = zero_exact = True
    for i in range(instances):
        rng = make_rng(seed, 81, i)
        d = int(rng.integers(1, 7))
        size = lambda: int(rng.integers(1, 9))  # noqa: E731
        m1, m2, m3 = (_random_measure(rng, d, size()) for _ in range(3))
        k = int(rng.integers(1, d + 1))
        r = MonomialSpec(tuple(rng.choice(d, size=k, replace=False)))
        v1, v2, v3 = mp_eval(m1, r), mp_eval(m2, r), mp_eval(m3, r)
        add_err = max(add_err, abs(mp_eval(add(m1, m2), r) - (v1 + v2)))
        p1, p2 = m1.normalized(), m2.normalized()
        a, b = mp_eval(p1, r), mp_eval(p2, r)
        mul_err = max(mul_err, abs(mp_eval(mul(p1, p2), r) - a * b) / max(1.0, abs(a * b)))
        lhs = mp_eval(mul(m1, add(m2, m3)), r)
        rhs = mp_eval(add(mul(m1, m2), mul(m1, m3)), r)
        dist_err = max(dist_err, abs(lhs - rhs) / max(1.0, abs(v1) * (abs(v2) + abs(v3))))
        one, zero = WeightedMeasure.identity(d), WeightedMeasure.zero(d)
        identity_exact &= mp_eval(mul(m1, one), r) == v1 and mp_eval(mul(one, m1), r) == v1
        zero_exact &= mp_eval(mul(m1, zero), r) == 0.0 and mp_eval(add(m1, zero), r) == v1 and mp_eval(add(zero, m1), r) == v1
    checks = {
        "additivity<=1e-12": add_err <= 1e-12,
        "multiplicativity<=1e-10": mul_err <= 1e-10,
        "distributivity<=1e-10": dist_err <= 1e-10,
        "identity exact": bool(identity_exact),
        "zero exact": bool(zero_exact),
    }
    return _finish(3, "semi-ring and homomorphism laws", 5, t0, checks,
                   {"additivity": add_err, "multiplicativity": mul_err, "distributivity": dist_err})


def criterion_4(families: int = 50, seed: int = 4) -> CriterionResult:
    t0 = time.perf_counter()
    passed = 0
    nontrivial = 0
    for i in range(families):
        rng = make_rng(seed, 82, i)
        d = int(rng.integers(3, 7))
        subsets = set()
        while len(subsets) < int(rng.integers(4, 9)):
            k = int(rng.integers(1, d + 1))
            subsets.add(tuple(sorted(int(x) for x in rng.choice(d, size=k, replace=False))))
        family = [MonomialSpec(s) for s in sorted(subsets)]

        def point():
            kind = rng.integers(0, 3, size=d)  # 0 -> 0, 1 -> 1, 2 -> free value in [2, 3]
            return np.where(kind == 0, 0.0, np.where(kind == 1, 1.0, rng.uniform(2, 3, size=d)))

        mu1, mu2 = WeightedMeasure.point_mass(point()), WeightedMeasure.point_mass(point())
        rep = compose_check(mu1, mu2, family, 1e-8)
        passed += rep.passed
        nontrivial += bool(rep.mul_predicted[0] or rep.mul_predicted[1])
    return _finish(4, "0/1-set composition", 2, t0, {"all families compose": passed == families},
                   {"passed": passed, "families": families, "with_predictions": nontrivial})


def _subset_index(s, d):
    return HermiteIndex.from_monomial(s, d)


def criterion_5(seed: int = 5) -> CriterionResult:
    t0 = time.perf_counter()
    d = 6
    subsets = [(0, 1, 2), (0, 1, 3), (2, 4, 5), (1, 3, 5), (0, 4, 5)]
    fam = HermiteFamily([_subset_index(s, d) for s in subsets])
    Z = initial_particles(FlowConfig(q=100_000, d=d, dt=1.0, steps=0, seed=seed))
    G, se = gram_matrix(Z, fam, stderr=True)
    off = ~np.eye(len(subsets), dtype=bool)
    dev_off = np.abs(G[off])
    dev_diag = np.abs(np.diag(G) - 3.0)
    # variable-disjoint pairs give G_ij = 0 with zero spread; 0 <= 0 passes
    z_off = np.where(dev_off == 0, 0.0, dev_off / np.where(se[off] > 0, se[off], 1.0))
    checks = {
        "off-diagonal<=5se": bool(np.all(dev_off <= 5 * se[off])),
        "diagonal within 5se of 3": bool(np.all(dev_diag <= 5 * np.diag(se))),
    }
    details = {"max_off_z": float(z_off.max()), "max_diag_z": float(np.max(dev_diag / np.diag(se))), "diagonal": np.diag(G).tolist()}
    return _finish(5, "Gram diagonality at init", 10, t0, checks, details)


def synthetic_single_loss() -> SeparableLoss:
    return SeparableLoss.quadratic_target(HermiteFamily([(1, 1, 1)]), [1.0])


def criterion_6(seed: int = 6) -> CriterionResult:
    t0 = time.perf_counter()
    loss = synthetic_single_loss()
    traj = integrate(loss, FlowConfig(q=10_000, d=3, dt=1e-3, steps=500, seed=seed))
    rho = np.array(traj.rho)[:, 0]
    H = np.array(traj.energy)
    t = np.array(traj.times)
    measured = (rho[1] - rho[0]) / (t[1] - t[0])
    predicted = 2 * traj.gram[0][0, 0] * (1 - rho[0])
    rel = abs(measured - predicted) / abs(predicted)
    checks = {
        "initial slope within 5%": rel <= 0.05,
        "rho increasing on [0,0.5]": bool(np.all(np.diff(rho) > 0)) and t[-1] >= 0.5 - 1e-12,
        "H non-increasing (1e-9 slack)": bool(np.all(np.diff(H) <= 1e-9)),
    }
    return _finish(6, "decoupled rate law", 30, t0, checks,
                   {"measured": measured, "predicted": predicted, "relative_error": rel, "G11_0": traj.gram[0][0, 0],
                    "max_H_step_increase": float(np.max(np.diff(H)))})


def criterion_7(seed: int = 7) -> CriterionResult:
    t0 = time.perf_counter()
    fam = HermiteFamily([(1, 1, 1, 0, 0, 0), (0, 0, 0, 1, 1, 1)])
    loss = SeparableLoss.quadratic_target(fam, [1.0, 1.0])
    traj = integrate(loss, FlowConfig(q=10_000, d=6, dt=1e-3, steps=500, seed=seed, record_every=10, symmetry_degree=0))
    rep = decoupling_report(traj, loss)
    checks = {"cross term <=5se at every recorded t": bool(np.all(rep.cross_ok)), "covers [0,0.5]": traj.times[-1] >= 0.5 - 1e-12}
    return _finish(7, "cross-term suppression", 60, t0, checks, {"max_cross": rep.max_cross, "frames": len(rep.times)})


def criterion_8(seed: int = 8) -> CriterionResult:
    from .runs import hermite_suite

    t0 = time.perf_counter()
    doc = hermite_suite(HermiteCheckConfig(seed=seed))
    checks = {
        "recurrence<=1e-10": doc["recurrence_ok"],
        "MC orthogonality within 5se": doc["mc_orthogonality_ok"],
        "quadrature<=1e-8": doc["quadrature_ok"],
        "odd parity exactly 0": doc["parity_ok"],
    }
    return _finish(8, "Hermite suite", 20, t0, checks,
                   {k: doc[k] for k in ("recurrence_residual", "quadrature_max_error", "parity_cases", "parity_max_abs")})


def criterion_9(seed: int = 9) -> CriterionResult:
    t0 = time.perf_counter()
    worst_res = 0.0
    count_ok = rank_ok = oracle_ok = True
    for i in range(50):
        rng = make_rng(seed, 91, i)
        m = int(rng.integers(2, 9))
        X = rng.standard_normal((m, m))
        A = X + X.T
        Y = rng.standard_normal((m, int(rng.integers(1, m + 1))))
        K = Y @ Y.T
        r = reduced_eigs(A, K)
        worst_res = max(worst_res, float(np.max(r.residuals)))
        count_ok &= r.nonzero_count <= m
        rank_ok &= r.nonzero_count == r.rank
        sym = symmetric_eigs_oracle(A, K)
        scale = max(1.0, float(np.max(np.abs(sym))))
        oracle_ok &= bool(np.allclose(np.sort(r.values.real)[::-1], sym, atol=1e-6 * scale))
        top = r.values[0].real
        lam, _ = inverse_iteration(A @ K, top + 1e-3 * scale)
        oracle_ok &= abs(lam - top) <= 1e-8 * scale
    # constructed traces
    dt = 0.1
    ts = np.round(np.arange(0.0, 3.0 + 1e-9, dt), 10)
    traces = [
        (lambda t: np.array([1.0 - t]), [(0, 1.0)]),
        (lambda t: np.array([2.0 + 0 * t]), []),
        (lambda t: np.array([2.5 - t, 0.35 - 0.5 * t]), [(1, 0.7), (0, 2.5)]),
    ]
    cross_ok = True
    for f, expected in traces:
        rep = track_crossings([SpectrumFrame(float(t), None, None, f(t)) for t in ts])
        got = [(c.index, c.t_cross) for c in rep.crossings]
        cross_ok &= len(got) == len(expected) and all(i == j and abs(a - b) <= dt / 2 for (i, a), (j, b) in zip(got, expected))
    # quadratic form against its double-integral Monte Carlo form
    fam = HermiteFamily([(1, 1, 1, 0), (0, 1, 1, 1), (2, 0, 1, 0)])
    K_exact = np.diag([float(a.norm_sq) for a in fam.indices])
    A = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    mc_ok, zs = True, []
    for j in range(3):
        c = make_rng(seed, 92, j).standard_normal(3)
        res = quadform_monte_carlo(c, A, fam, 200_000, seed + j, K_exact)
        z = abs(res.estimate - res.exact) / res.std_error
        zs.append(z)
        mc_ok &= z <= 5
    checks = {
        "eigen residual<=1e-8": worst_res <= 1e-8,
        "nonzero count<=m": bool(count_ok),
        "nonzero count equals numerical rank": bool(rank_ok),
        "independent eigensolver agrees": bool(oracle_ok),
        "crossings within dt/2": bool(cross_ok),
        "quadform MC within 5se": bool(mc_ok),
    }
    return _finish(9, "spectrum reduction", 10, t0, checks, {"worst_residual": worst_res, "quadform_z": zs})


def _fd_identities(problem: MaxEntProblem, lam, h=1e-5):
    lam = np.asarray(lam, dtype=float)
    g = central_difference(lambda x: log_partition(x, problem), lam, h)
    Hfd = np.array([central_difference(lambda x: moments(x, problem)[i], lam, h) for i in range(problem.m)])
    return float(np.max(np.abs(g - moments(lam, problem)))), float(np.max(np.abs(Hfd - covariance(lam, problem))))


def criterion_10(seed: int = 10) -> CriterionResult:
    t0 = time.perf_counter()
    target = 1 / np.tanh(1.0) - 1.0
    p1 = MaxEntProblem(HermiteFamily([(1,)]), [target], 1.0)
    s1 = solve(p1)
    p3 = MaxEntProblem(HermiteFamily([(1, 1, 1)]), [0.2], 2.0)
    s3 = solve(p3)
    s3b = solve(MaxEntProblem(HermiteFamily([(1, 1, 1)]), s3.moments, 2.0))
    g1, h1 = _fd_identities(p1, [0.7])
    g3, h3 = _fd_identities(p3, s3.lam)
    norm = normalization_adaptive(s1, p1)
    pert = entropy_perturbations(s1, p1, count=100, seed=seed, tol=1e-6)
    p2 = MaxEntProblem(HermiteFamily([(1, 1), (2, 0)]), [0.1, -0.6], 1.0)
    s2 = solve(p2)
    pert2 = entropy_perturbations(s2, p2, count=100, seed=seed + 1, tol=1e-6)
    checks = {
        "closed form lambda=1 (1e-6)": s1.converged and abs(s1.lam[0] - 1.0) <= 1e-6,
        "round-trip identifiability (1e-8)": s3.converged and s3b.converged and float(np.max(np.abs(s3b.lam - s3.lam))) <= 1e-8,
        "dlogZ/dlambda = moments (1e-6)": max(g1, g3) <= 1e-6,
        "d2logZ = covariance (1e-6)": max(h1, h3) <= 1e-6,
        "normalization (1e-8)": abs(norm - 1.0) <= 1e-8,
        "no perturbation has lower entropy": pert.lower_count == 0 and pert2.lower_count == 0,
    }
    details = {
        "lambda_closed_form": float(s1.lam[0]),
        "perturbations_lower_d1": pert.lower_count,
        "perturbations_higher_d1": pert.higher_count,
        "perturbations_lower_d2": pert2.lower_count,
        "perturbations_higher_d2": pert2.higher_count,
        "max_moment_error": float(max(pert.moment_errors.max(), pert2.moment_errors.max())),
        "entropy_u_star_d1": pert.base_entropy,
        "max_entropy_perturbed_d1": float(pert.entropies.max()),
    }
    return _finish(10, "maxent solver", 30, t0, checks, details)


def criterion_11(seeds: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    worst = 0.0
    for n in (3, 5):
        basis, norm = FourierBasis(n), Normalization.mean_over_pairs(n)
        for seed in range(seeds):
            ps = ParticleSystem.random(n, 3, 500 + seed, scale=0.8)
            g = loss_gradient(ps, basis, norm)
            fd = central_difference(lambda x: direct_loss(ParticleSystem.from_real(n, x), basis, norm), ps.to_real())
            worst = max(worst, float(np.max(np.abs(fd - g)) / np.max(np.abs(g))))
    return _finish(11, "gradient integrity", 10, t0, {"relative error<=1e-6": worst <= 1e-6}, {"worst_relative_error": worst})


def _digest(directory: Path) -> dict[str, str]:
    art.require_run_meta(directory)
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir()) if p.is_file()}


def _artifact_runs(root: Path) -> list[Path]:
    from . import runs

    dirs = []
    d = root / "decompose"
    runs.run_decompose_check(DecomposeCheckConfig(n=3, q=8, seeds=3), d)
    dirs.append(d)
    d = root / "decouple"
    runs.run_decouple(DecoupleConfig(monomials=[[1, 1, 1]], targets=[1.0], q=2000, dt=1e-3, steps=60, seed=12,
                                     record_every=5, snapshot_every=20), d)
    runs.run_spectrum(d)
    runs.emit_plot_data(d)
    dirs.append(d)
    d = root / "abelian"
    runs.run_train_abelian(AbelianConfig(n=3, q=64, dt=0.05, steps=20, seed=12, record_every=5, snapshot_every=10), d)
    runs.emit_plot_data(d)
    dirs.append(d)
    d = root / "maxent"
    runs.run_maxent(MaxEntConfig(monomials=[[0]], targets=[0.3130352854993313], box=1.0, dim=1), d)
    dirs.append(d)
    d = root / "hermite"
    runs.run_hermite_check(HermiteCheckConfig(seed=12, samples=2000, max_degree=2, dim=2), d)
    dirs.append(d)
    d = root / "compose"
    inputs = root / "compose_inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    WeightedMeasure.point_mass([1.0, 0.0, 1.0]).save(inputs / "a.json")
    WeightedMeasure.point_mass([1.0, 1.0, 2.0]).save(inputs / "b.json")
    (inputs / "family.json").write_text("[[0], [1], [0, 2], [1, 2]]")
    runs.run_compose(inputs / "a.json", inputs / "b.json", inputs / "family.json", d)
    dirs.append(d)
    return dirs


def criterion_12(workdir: str | Path | None = None) -> CriterionResult:
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir) if workdir else Path(tmp)
        first = [_digest(p) for p in _artifact_runs(base / "run")]
        shutil.rmtree(base / "run")
        second = [_digest(p) for p in _artifact_runs(base / "run")]
        # an acceptance item evaluated twice
        c5a, c5b = criterion_5(), criterion_5()
    mismatched = [f"{d}" for a, b in zip(first, second) for d in sorted(set(a) | set(b)) if a.get(d) != b.get(d)]
    files = sum(len(a) for a in first)
    checks = {
        "artifact files bit-identical": not mismatched,
        "criterion values identical": c5a.details == c5b.details,
    }
    return _finish(12, "determinism", None, t0, checks, {"files_compared": files, "mismatched": mismatched})


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
}


def run_suite(only=None, out=None, echo=print) -> list[CriterionResult]:
    results = []
    for number in sorted(only or CRITERIA):
        res = CRITERIA[number]()
        echo(res.line())
        results.append(res)
    echo(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        art.write_json(Path(out) / "acceptance.json", [
            {"number": r.number, "title": r.title, "passed": r.passed, "seconds": r.seconds, "limit": r.limit,
             "checks": r.checks, "details": r.details} for r in results])
    return results
