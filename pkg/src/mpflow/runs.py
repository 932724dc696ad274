"""Experiment runners behind the command line.  Each writes its artifacts and
run_meta.json into an output directory and returns a summary dict."""

from __future__ import annotations

import io
import logging
import zipfile
from pathlib import Path

import numpy as np

from . import artifacts as art
from .abelian_task import ParticleSystem
from .config import AbelianConfig, DecomposeCheckConfig, DecoupleConfig, HermiteCheckConfig, MaxEntConfig
from .dynamics import (
    FlowConfig,
    FlowDiverged,
    HermiteFamily,
    SeparableLoss,
    decoupling_report,
    exp_fit,
    integrate,
    potentials,
)
from .hermite import (
    HermiteIndex,
    gauss_hermite_expectation,
    gaussian_expectation,
    hermite_eval,
    multi_indices,
    parity_zero_check,
    recurrence_residual,
    table_deviation,
)
from .maxent import MaxEntProblem, SingularCovariance, normalization_adaptive, solve
from .measure_algebra import WeightedMeasure, compose_check, load_family
from .potentials import (
    AbelianMPVector,
    Calibration,
    TargetAssignment,
    abelian_loss,
    calibrate,
    decomposition_residual,
    distance_to_01,
    ell_csv,
    eval_mps,
    mps_json,
)
from .spectrum import SpectrumFrame, kernel_matrix, track_crossings

log = logging.getLogger(__name__)

SNAPSHOTS = "snapshots.npz"
TRAJECTORY = "trajectory.csv"
CONFIG = "config.json"


class RunAborted(RuntimeError):
    """A numerical guard stopped the run; partial artifacts were written."""


def save_npz(path, arrays: dict[str, np.ndarray]) -> None:
    """npz with fixed zip timestamps, so equal arrays give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _prepare(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def run_decompose_check(cfg: DecomposeCheckConfig, out) -> dict:
    out = _prepare(out)
    calib = calibrate(cfg.n)
    rows, worst = [], 0.0
    ok_all = True
    first: ParticleSystem | None = None
    for seed in range(cfg.seed0, cfg.seed0 + cfg.seeds):
        ps = ParticleSystem.random(cfg.n, cfg.q, seed, scale=cfg.scale)
        r = decomposition_residual(ps, calib)
        ok = r.within(cfg.rtol)
        ok_all &= ok
        worst = max(worst, abs(r.delta) / (1 + abs(r.direct)))
        rows.append([cfg.n, cfg.q, seed, r.direct, r.decomposed, r.delta, ok])
        if first is None:
            first = ps
    art.write_csv(out / "residuals.csv", ["n", "q", "seed", "H_direct", "H_decomposed", "delta", "within_tol"], rows)
    art.write_json(out / "calibration.json", calib.to_json_dict())
    mps = eval_mps(first)
    (out / "ell.csv").write_text(ell_csv(mps), encoding="utf-8")
    (out / "mps.json").write_text(mps_json(mps) + "\n", encoding="utf-8")
    summary = {"passed": ok_all, "worst_relative_delta": worst, "rtol": cfg.rtol, "checked": len(rows)}
    art.write_json(out / "summary.json", summary)
    art.write_run_meta(out, "decompose-check", cfg.model_dump(), list(range(cfg.seed0, cfg.seed0 + cfg.seeds)),
                       calib.to_json_dict(), ["residuals.csv", "calibration.json", "ell.csv", "mps.json", "summary.json"])
    return summary


def _flow_config(cfg, d: int, record_gram: bool = True, symmetrize: bool = False) -> FlowConfig:
    return FlowConfig(
        q=cfg.q, d=d, dt=cfg.dt, steps=cfg.steps, seed=cfg.seed, integrator=cfg.integrator,
        record_every=cfg.record_every, snapshot_every=cfg.snapshot_every, symmetry_degree=cfg.symmetry_degree,
        symmetrize_init=symmetrize, init_scale=cfg.init_scale, max_abs_z=cfg.max_abs_z,
        max_h_increase=cfg.max_h_increase, record_gram=record_gram,
    )


def _write_trajectory(out: Path, traj, files: list[str]) -> None:
    header, rows = art.trajectory_rows(traj)
    art.write_csv(out / TRAJECTORY, header, rows)
    files.append(TRAJECTORY)
    if traj.snapshots:
        save_npz(out / SNAPSHOTS, {"t": np.array(traj.snapshot_times), "Z": np.array(traj.snapshots)})
        files.append(SNAPSHOTS)


def decouple_loss(cfg: DecoupleConfig) -> SeparableLoss:
    family = HermiteFamily([HermiteIndex(tuple(a)) for a in cfg.monomials])
    return SeparableLoss.quadratic_target(family, cfg.targets, cfg.weights)


def run_decouple(cfg: DecoupleConfig, out) -> dict:
    out = _prepare(out)
    loss = decouple_loss(cfg)
    files = [CONFIG, "summary.json"]
    art.write_json(out / CONFIG, {"kind": "decouple", "config": cfg.model_dump()})
    aborted = None
    try:
        traj = integrate(loss, _flow_config(cfg, cfg.d, symmetrize=cfg.symmetrize_init))
    except FlowDiverged as exc:
        traj, aborted = exc.trajectory, str(exc)
    _write_trajectory(out, traj, files)
    summary: dict = {"aborted": aborted, "m": loss.m, "d": cfg.d, "steps_taken": traj.steps_taken,
                     "H_initial": traj.energy[0], "H_final": traj.energy[-1], "max_h_increase": traj.max_h_increase}
    if len(traj.times) >= 2:
        rep = decoupling_report(traj, loss)
        art.write_csv(
            out / "decoupling.csv",
            ["t"] + [f"residual_{i}" for i in range(loss.m)] + ["cross", "cross_bound", "cross_ok"],
            [[rep.times[k], *(rep.residual[k] if k < len(rep.residual) else [float("nan")] * loss.m),
              rep.cross[k], rep.cross_bound[k], bool(rep.cross_ok[k])] for k in range(len(rep.times))],
        )
        files.append("decoupling.csv")
        rho = np.array(traj.rho)
        t = np.array(traj.times)
        G0 = np.diag(traj.gram[0])
        measured = (rho[1] - rho[0]) / (t[1] - t[0])
        predicted = -G0 * loss.grad(rho[0])
        summary["initial_slope"] = {"measured": measured, "predicted": predicted,
                                    "relative_error": np.abs(measured - predicted) / np.maximum(np.abs(predicted), 1e-300)}
        summary["rho_monotone_increasing"] = [bool(np.all(np.diff(rho[:, i]) > 0)) for i in range(loss.m)]
        summary["decoupling"] = {"max_residual": rep.max_residual, "max_cross": rep.max_cross,
                                 "cross_within_5se": bool(np.all(rep.cross_ok))}
        fits = {}
        for i, tgt in enumerate(cfg.targets):
            if tgt == 1.0 and len(t) >= 10:
                f = exp_fit(rho[:, i], t)
                fits[f"rho_{i}"] = {"rate": f.rate, "r_squared": f.r_squared, "defined": f.defined}
        summary["exp_fit"] = fits
    summary["symmetry_z_final"] = traj.symmetry[-1]
    art.write_json(out / "summary.json", summary)
    art.write_run_meta(out, "decouple", cfg.model_dump(), [cfg.seed], None, files)
    if aborted:
        raise RunAborted(aborted)
    return summary


def _kkk_index(n: int, k: int) -> int:
    m = n - 1
    return (k - 1) * (m * m + m + 1)


def run_train_abelian(cfg: AbelianConfig, out) -> dict:
    out = _prepare(out)
    n = cfg.n
    calib = calibrate(n) if cfg.calibrate else Calibration.default(n)
    loss = abelian_loss(n, calib)
    target = TargetAssignment.boolean_solution(n)

    def observer(Z, rho):
        row = {"dist01": distance_to_01(AbelianMPVector.from_real_coords(n, rho), target)}
        for k in range(1, n):
            row[f"rho_kkk_{k}"] = rho[_kkk_index(n, k)]
        return row

    files = [CONFIG, "summary.json"]
    art.write_json(out / CONFIG, {"kind": "abelian", "config": cfg.model_dump(), "calibration": calib.to_json_dict()})
    aborted = None
    fcfg = _flow_config(cfg, 6 * (n - 1), record_gram=cfg.record_gram)
    try:
        traj = integrate(loss, fcfg, observer=observer)
    except FlowDiverged as exc:
        traj, aborted = exc.trajectory, str(exc)
    _write_trajectory(out, traj, files)
    H = np.array(traj.energy)
    t = np.array(traj.times)
    summary: dict = {
        "aborted": aborted, "n": n, "q": cfg.q, "seed": cfg.seed, "steps_taken": traj.steps_taken,
        "calibration": calib.to_json_dict(), "H_initial": H[0], "H_final": H[-1],
        "H_non_increasing": bool(np.all(np.diff(H) <= 1e-9)), "max_h_increase": traj.max_h_increase,
        "dist01_initial": traj.extras["dist01"][0], "dist01_final": traj.extras["dist01"][-1],
    }
    fits = {}
    for k in range(1, n):
        series = np.array(traj.extras[f"rho_kkk_{k}"])
        if len(series) >= 10:
            f = exp_fit(series, t)
            fits[f"rho_kkk_{k}"] = {"rate": f.rate, "r_squared": f.r_squared, "defined": f.defined, "clipped": f.clipped}
    summary["exp_fit"] = fits
    final = ParticleSystem.from_real(n, traj.final, seed=cfg.seed)
    final.save(out / "particles.json")
    mps = eval_mps(final)
    (out / "ell.csv").write_text(ell_csv(mps), encoding="utf-8")
    (out / "mps.json").write_text(mps_json(mps) + "\n", encoding="utf-8")
    files += ["particles.json", "ell.csv", "mps.json"]
    art.write_json(out / "summary.json", summary)
    art.write_run_meta(out, "train-abelian", cfg.model_dump(), [cfg.seed], calib.to_json_dict(), files)
    if aborted:
        raise RunAborted(aborted)
    return summary


# ---------------------------------------------------------------------------


def load_run_loss(traj_dir) -> SeparableLoss:
    doc = art.read_json(Path(traj_dir) / CONFIG)
    kind = doc.get("kind")
    if kind == "decouple":
        return decouple_loss(DecoupleConfig.model_validate(doc["config"]))
    if kind == "abelian":
        c = doc["calibration"]
        return abelian_loss(c["n"], Calibration(c["n"], c["c_norm"], c["scale"], c["prefactor"], c["constant"], c["fit_residual"]))
    raise art.CorruptArtifact(f"{traj_dir}/{CONFIG}: unknown run kind {kind!r}")


def run_spectrum(traj_dir, out=None) -> dict:
    traj_dir = Path(traj_dir)
    art.require_run_meta(traj_dir)
    out = _prepare(out or traj_dir)
    loss = load_run_loss(traj_dir)
    snap_path = traj_dir / SNAPSHOTS
    if not snap_path.exists():
        raise FileNotFoundError(f"{snap_path} not found; rerun with snapshot_every > 0")
    with np.load(snap_path) as data:
        times, Zs = data["t"], data["Z"]
    frames = []
    for t, Z in zip(times, Zs):
        rho = potentials(Z, loss.family)
        frames.append(SpectrumFrame.build(float(t), loss.hess(rho), kernel_matrix(Z, loss.family)))
    m = loss.m
    header = ["t"] + [c for i in range(1, m + 1) for c in (f"lambda_{i}_re", f"lambda_{i}_im")] + ["max_residual"]
    rows = [[f.t, *[v for lam in f.eigs for v in (lam.real, lam.imag)], float(np.max(f.residuals))] for f in frames]
    art.write_csv(out / "spectrum.csv", header, rows)
    report = track_crossings(frames)
    doc = report.to_json_dict()
    doc["frames"] = len(frames)
    first = frames[0].hessian if frames else None
    doc["hessian_drift"] = max((float(np.max(np.abs(f.hessian - first))) for f in frames), default=0.0)
    art.write_json(out / "crossings.json", doc)
    meta_files = ["spectrum.csv", "crossings.json"]
    if out != traj_dir:
        art.write_run_meta(out, "spectrum", {"traj": str(traj_dir)}, [], None, meta_files)
    else:
        meta = art.require_run_meta(traj_dir)
        art.write_run_meta(out, meta["command"], meta["config"], meta["seeds"], meta["calibration"],
                           sorted(set(meta["files"]) | set(meta_files)))
    return doc


def run_compose(a, b, family_path, out, tol: float = 1e-8) -> dict:
    out = _prepare(out)
    mu1, mu2 = WeightedMeasure.load(a), WeightedMeasure.load(b)
    family = load_family(family_path)
    report = compose_check(mu1, mu2, family, tol)
    doc = report.to_json_dict()
    art.write_json(out / "compose.json", doc)
    art.write_run_meta(out, "compose", {"a": str(a), "b": str(b), "family": str(family_path), "tol": tol}, [], None, ["compose.json"])
    return doc


def maxent_problem(cfg: MaxEntConfig) -> MaxEntProblem:
    fam = HermiteFamily([HermiteIndex.from_monomial(mono, cfg.dim) for mono in cfg.monomials])
    return MaxEntProblem(fam, cfg.targets, cfg.box, cfg.nodes)


def run_maxent(cfg: MaxEntConfig, out) -> dict:
    out = _prepare(out)
    problem = maxent_problem(cfg)
    try:
        sol = solve(problem, cfg.tol, cfg.max_iter)
    except SingularCovariance as exc:
        raise RunAborted(str(exc)) from exc
    doc = {"lambda": sol.lam, "logZ": sol.logZ, "moments": sol.moments, "iterations": sol.iterations,
           "converged": sol.converged, "residual_history": sol.residual_history,
           "condition_number": sol.condition_number}
    if problem.dim <= 2 and sol.converged:
        doc["normalization_adaptive"] = normalization_adaptive(sol, problem)
    art.write_json(out / "solution.json", doc)
    art.write_run_meta(out, "maxent", cfg.model_dump(), [], None, ["solution.json"])
    if not sol.converged:
        raise RunAborted(f"maxent did not converge in {cfg.max_iter} iterations; residuals {sol.residual_history[-3:]}")
    return doc


def hermite_suite(cfg: HermiteCheckConfig) -> dict:
    """Recurrence, orthogonality (Monte Carlo and quadrature) and parity checks."""
    xs = np.linspace(-3, 3, 121)
    rec = recurrence_residual(cfg.kmax, xs)
    table_dev = table_deviation(cfg.kmax + 1, xs)
    idx = multi_indices(cfg.dim, cfg.max_degree)
    mc_rows, quad_err, mc_ok = [], 0.0, True
    for i, a in enumerate(idx):
        for b in idx[i:]:
            exact = float(a.norm_sq) if a == b else 0.0
            f = lambda P, a=a, b=b: hermite_eval(a, P) * hermite_eval(b, P)  # noqa: E731
            mc = gaussian_expectation(f, cfg.dim, cfg.samples, cfg.seed)
            ok = mc.within(exact)
            mc_ok &= ok
            quad_err = max(quad_err, abs(gauss_hermite_expectation(f, cfg.dim) - exact))
            mc_rows.append({"alpha": a.alpha, "beta": b.alpha, "exact": exact, "mc": mc.mean, "std_error": mc.std_error, "ok": ok})
    # parity on a symmetrized Gaussian particle measure
    from ._numerics import make_rng

    d = cfg.dim
    half = make_rng(cfg.seed, 71).standard_normal((500, d))
    mu = WeightedMeasure.empirical(half).symmetrized()
    parity_worst, parity_cases = 0.0, 0
    units = [HermiteIndex.unit(l, d) for l in range(d)]
    for e1 in range(d):
        for e2 in range(d):
            for a in idx:
                for b in idx:
                    for c in (idx[0], idx[-1]):
                        al, be, ga = a + units[e1] + units[e2], b + units[e1], c + units[e2]
                        res = parity_zero_check(al, be, ga, e1, e2, mu)
                        if res.predicted_zero:
                            parity_cases += 1
                            parity_worst = max(parity_worst, abs(res.value))
    return {
        "recurrence_residual": rec,
        "recurrence_ok": rec <= 1e-10,
        "table_relative_deviation": table_dev,
        "table_ok": table_dev <= 1e-12,
        "mc_orthogonality_ok": mc_ok,
        "quadrature_max_error": quad_err,
        "quadrature_ok": quad_err <= 1e-8,
        "parity_cases": parity_cases,
        "parity_max_abs": parity_worst,
        "parity_ok": parity_worst == 0.0,
        "mc_pairs": mc_rows,
    }


def run_hermite_check(cfg: HermiteCheckConfig, out) -> dict:
    out = _prepare(out)
    doc = hermite_suite(cfg)
    doc["passed"] = bool(doc["recurrence_ok"] and doc["table_ok"] and doc["mc_orthogonality_ok"] and doc["quadrature_ok"] and doc["parity_ok"])
    art.write_json(out / "hermite_check.json", doc)
    art.write_run_meta(out, "hermite-check", cfg.model_dump(), [cfg.seed], None, ["hermite_check.json"])
    return doc


# ---------------------------------------------------------------------------


def emit_plot_data(traj_dir, out=None) -> Path:
    """Tidy CSV (t, series, value) from trajectory.csv and, if present, spectrum.csv.

    Series: ``H``; ``rho`` for a single potential, else ``rho_<i>``;
    ``rho_kkk_<k>`` and ``dist01`` for Abelian runs; ``lambda_<i>`` (real part).
    """
    traj_dir = Path(traj_dir)
    art.require_run_meta(traj_dir)
    out_path = Path(out) if out else traj_dir / "plot_data.csv"
    rows: list[list] = []
    header, rows_raw = art.read_csv(traj_dir / TRAJECTORY)
    if rows_raw:
        _, data = art.read_numeric_csv(traj_dir / TRAJECTORY)
        rho_cols = [c for c in header if c.startswith("rho_") and c[4:].isdigit()]
        keep = {"H": "H"}
        if len(rho_cols) == 1:
            keep[rho_cols[0]] = "rho"
        else:
            keep.update({c: c for c in rho_cols})
        keep.update({c: c for c in header if c.startswith("rho_kkk_") or c == "dist01"})
        cols = [(header.index(c), name) for c, name in keep.items()]
        for r in data:
            rows.extend([r[0], name, r[j]] for j, name in cols)
    spec = traj_dir / "spectrum.csv"
    if spec.exists():
        sh, srows = art.read_csv(spec)
        if srows:
            _, sdata = art.read_numeric_csv(spec)
            lam_cols = [(j, c[: -len("_re")]) for j, c in enumerate(sh) if c.startswith("lambda_") and c.endswith("_re")]
            for r in sdata:
                rows.extend([r[0], name, r[j]] for j, name in lam_cols)
    art.write_csv(out_path, ["t", "series", "value"], rows)
    return out_path
