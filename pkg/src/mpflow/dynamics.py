"""Particle realization of the Wasserstein gradient flow of H[mu] = L(rho[mu]).

Each particle follows dz/dt = -sum_j dL/drho_j(rho(t)) grad r_j(z), with rho(t)
the particle average of the family.  Diagnostics measure how close the flow
is to the decoupled law d rho_i/dt = -G_ii dL/drho_i.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import make_rng, mean_and_stderr, odd_multi_indices, paired_mean
from .hermite import HermiteIndex, he_table

log = logging.getLogger(__name__)


class FlowDiverged(RuntimeError):
    """Raised by the numerical guards; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


class HermiteFamily:
    """A family R = {h_alpha_1, ..., h_alpha_m} over R^d."""

    def __init__(self, indices):
        self.indices = [i if isinstance(i, HermiteIndex) else HermiteIndex(tuple(i)) for i in indices]
        if not self.indices:
            raise ValueError("family must contain at least one polynomial")
        dims = {i.d for i in self.indices}
        if len(dims) != 1:
            raise ValueError(f"multi-indices have mixed dimensions {sorted(dims)}")
        self.d = dims.pop()
        self.m = len(self.indices)
        self._A = np.array([i.alpha for i in self.indices], dtype=int)  # (m, d)
        self._kmax = int(self._A.max())

    def __repr__(self):
        return f"HermiteFamily({[i.alpha for i in self.indices]})"

    def _table(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return Z, he_table(Z, self._kmax)  # (kmax+1, q, d)

    def values(self, Z) -> np.ndarray:
        Z, T = self._table(Z)
        cols = np.arange(self.d)
        # T[A[i, l], :, l] for every (i, l) -> (m, q, d), product over d
        return np.prod(T[self._A[:, None, :], np.arange(len(Z))[None, :, None], cols[None, None, :]], axis=2).T

    def grads(self, Z) -> np.ndarray:
        """(q, m, d) with [p, i, l] = alpha_il h_{alpha_i - e_l}(z_p)."""
        Z, T = self._table(Z)
        q = len(Z)
        cols = np.arange(self.d)
        rows = np.arange(q)[None, :, None]
        F = T[self._A[:, None, :], rows, cols[None, None, :]]  # (m, q, d)
        lowered = np.maximum(self._A - 1, 0)
        D = T[lowered[:, None, :], rows, cols[None, None, :]] * self._A[:, None, :]
        out = np.empty((self.m, q, self.d))
        for l in range(self.d):
            others = np.delete(F, l, axis=2)
            out[:, :, l] = D[:, :, l] * np.prod(others, axis=2)
        return out.transpose(1, 0, 2)

    def velocity(self, Z, dL) -> np.ndarray:
        return np.einsum("pid,i->pd", self.grads(Z), np.asarray(dL, dtype=float))


@dataclass
class SeparableLoss:
    """L(rho) over the potentials of ``family`` with up to third derivatives.

    ``third`` may be None, meaning the third derivative vanishes.
    """

    family: object
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    third: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.family.m

    @classmethod
    def quadratic_target(cls, family, targets, weights=None) -> "SeparableLoss":
        """L = sum_i w_i (rho_i - t_i)^2."""
        t = np.asarray(targets, dtype=float)
        w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
        if t.shape != (family.m,) or w.shape != (family.m,):
            raise ValueError("targets and weights need one entry per family member")
        return cls(
            family,
            value=lambda r: float(np.sum(w * (np.asarray(r) - t) ** 2)),
            grad=lambda r: 2 * w * (np.asarray(r) - t),
            hess=lambda r: np.diag(2 * w),
            third=lambda r: np.zeros((len(t),) * 3),
            name="quadratic_target",
            params={"targets": t.tolist(), "weights": w.tolist()},
        )

    @classmethod
    def quadratic_form(cls, family, Q, b, c: float = 0.0, name: str = "quadratic_form") -> "SeparableLoss":
        """L = 1/2 rho^T Q rho + b^T rho + c."""
        Q = np.asarray(Q, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(
            family,
            value=lambda r: float(0.5 * r @ Q @ r + b @ r + c),
            grad=lambda r: Q @ r + b,
            hess=lambda r: Q,
            third=None,
            name=name,
        )


def potentials(Z, family) -> np.ndarray:
    """rho_i = particle average of r_i."""
    return paired_mean(family.values(Z), axis=0)


def velocity_field(loss: SeparableLoss, rho, z) -> np.ndarray:
    """sum_j dL/drho_j(rho) grad r_j(z); a single point or an (N, d) array."""
    z = np.asarray(z, dtype=float)
    v = loss.family.velocity(np.atleast_2d(z), loss.grad(np.asarray(rho, dtype=float)))
    return v[0] if z.ndim == 1 else v


def gram_matrix(Z, family, stderr: bool = False, chunk: int = 512):
    """G_ij = mean over particles of grad r_i . grad r_j (and its standard error)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    q = len(Z)
    m = family.m
    s1 = np.zeros((m, m))
    s2 = np.zeros((m, m))
    for start in range(0, q, chunk):
        g = family.grads(Z[start : start + chunk])
        per = np.einsum("pid,pjd->pij", g, g)
        s1 += per.sum(axis=0)
        if stderr:
            s2 += (per**2).sum(axis=0)
    G = s1 / q
    if not stderr:
        return G
    if q < 2:
        return G, np.zeros_like(G)
    var = np.maximum(s2 - q * G**2, 0.0) / (q - 1)
    return G, np.sqrt(var / q)


def symmetry_diagnostic(Z, max_degree: int = 3) -> float:
    """Worst |empirical moment| / standard error over odd monomials up to ``max_degree``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    worst = 0.0
    for a in odd_multi_indices(Z.shape[1], max_degree):
        v = np.ones(len(Z))
        for l, e in enumerate(a):
            if e:
                v = v * Z[:, l] ** e
        mean, se = mean_and_stderr(v)
        if mean == 0:
            continue
        worst = max(worst, math.inf if se == 0 else float(abs(mean) / se))
    return worst


@dataclass
class FlowConfig:
    q: int
    d: int
    dt: float
    steps: int
    seed: int = 0
    integrator: str = "euler"
    record_every: int = 1
    snapshot_every: int = 0
    symmetry_degree: int = 3
    symmetrize_init: bool = False
    init_scale: float = 1.0
    max_abs_z: float = 1e6
    max_h_increase: float = 1e-3
    record_gram: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.q < 1:
            raise ValueError("need at least one particle")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    rho: list[np.ndarray] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)
    gram: list[np.ndarray] = field(default_factory=list)
    gram_se: list[np.ndarray] = field(default_factory=list)
    symmetry: list[float] = field(default_factory=list)
    extras: dict[str, list[float]] = field(default_factory=dict)
    snapshot_times: list[float] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    max_h_increase: float = 0.0
    steps_taken: int = 0
    final: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "t": np.array(self.times),
            "rho": np.array(self.rho),
            "energy": np.array(self.energy),
            "gram": np.array(self.gram),
            "gram_se": np.array(self.gram_se),
        }


def initial_particles(config: FlowConfig) -> np.ndarray:
    """i.i.d. N(0, init_scale^2 I_d), optionally closed under negation."""
    rng = make_rng(config.seed, 41)
    if config.symmetrize_init:
        half = rng.standard_normal((config.q // 2, config.d))
        Z = np.concatenate([half, -half])
        if config.q % 2:
            Z = np.concatenate([Z, np.zeros((1, config.d))])
    else:
        Z = rng.standard_normal((config.q, config.d))
    return config.init_scale * Z


def _drift(loss: SeparableLoss, Z: np.ndarray):
    rho = potentials(Z, loss.family)
    return -loss.family.velocity(Z, loss.grad(rho)), rho


def integrate(
    loss: SeparableLoss,
    config: FlowConfig,
    Z0: np.ndarray | None = None,
    observer: Callable[[np.ndarray, np.ndarray], dict[str, float]] | None = None,
) -> Trajectory:
    """Fixed-step integration of the particle ODE; records every ``record_every`` steps."""
    Z = initial_particles(config) if Z0 is None else np.array(Z0, dtype=float)
    if Z.shape != (config.q, config.d):
        raise ValueError(f"initial particles have shape {Z.shape}, expected {(config.q, config.d)}")
    traj = Trajectory()
    fam = loss.family

    def record(step: int, Z: np.ndarray, rho: np.ndarray, h: float) -> None:
        t = step * config.dt
        traj.times.append(t)
        traj.rho.append(rho.copy())
        traj.energy.append(h)
        if config.record_gram:
            G, se = gram_matrix(Z, fam, stderr=True)
            traj.gram.append(G)
            traj.gram_se.append(se)
        traj.symmetry.append(symmetry_diagnostic(Z, config.symmetry_degree) if config.symmetry_degree > 0 else float("nan"))
        if observer is not None:
            for k, v in observer(Z, rho).items():
                traj.extras.setdefault(k, []).append(float(v))

    def snapshot(step: int, Z: np.ndarray) -> None:
        if config.snapshot_every and step % config.snapshot_every == 0:
            traj.snapshot_times.append(step * config.dt)
            traj.snapshots.append(Z.copy())

    v, rho = _drift(loss, Z)
    h_prev = loss.value(rho)
    record(0, Z, rho, h_prev)
    snapshot(0, Z)
    traj.final = Z
    dt = config.dt
    for step in range(1, config.steps + 1):
        if config.integrator == "euler":
            Z = Z + dt * v
        else:
            k1 = v
            k2, _ = _drift(loss, Z + 0.5 * dt * k1)
            k3, _ = _drift(loss, Z + 0.5 * dt * k2)
            k4, _ = _drift(loss, Z + dt * k3)
            Z = Z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        v, rho = _drift(loss, Z)
        h = loss.value(rho)
        traj.steps_taken = step
        traj.final = Z
        if not np.all(np.isfinite(Z)) or np.max(np.abs(Z)) > config.max_abs_z:
            raise FlowDiverged(f"particle coordinate exceeded {config.max_abs_z:g} at step {step}", traj)
        inc = h - h_prev
        traj.max_h_increase = max(traj.max_h_increase, inc)
        if inc > config.max_h_increase:
            raise FlowDiverged(f"H increased by {inc:.3e} at step {step} (guard {config.max_h_increase:g})", traj)
        h_prev = h
        if step % config.record_every == 0 or step == config.steps:
            record(step, Z, rho, h)
        snapshot(step, Z)
    if config.snapshot_every and traj.snapshot_times[-1] != traj.times[-1]:
        traj.snapshot_times.append(traj.times[-1])
        traj.snapshots.append(Z.copy())
    return traj


@dataclass
class DecouplingReport:
    times: np.ndarray
    residual: np.ndarray  # (T-1, m)
    cross: np.ndarray  # (T,) max_{i != j} |G_ij dL_j|
    cross_bound: np.ndarray  # (T,) 5 * se at the same (i, j) maximiser
    cross_ok: np.ndarray  # (T,) every off-diagonal |G_ij dL_j| <= 5 se_ij |dL_j|

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0

    @property
    def max_cross(self) -> float:
        return float(np.max(self.cross)) if self.cross.size else 0.0


def decoupling_report(traj: Trajectory, loss: SeparableLoss, eps: float = 1e-12, k_sigma: float = 5.0) -> DecouplingReport:
    if not traj.gram:
        raise ValueError("trajectory was recorded without Gram matrices")
    t = np.array(traj.times)
    rho = np.array(traj.rho)
    G = np.array(traj.gram)
    se = np.array(traj.gram_se)
    grads = np.array([loss.grad(r) for r in rho])
    T, m = rho.shape
    res = np.zeros((max(T - 1, 0), m))
    for k in range(T - 1):
        rate = (rho[k + 1] - rho[k]) / (t[k + 1] - t[k])
        pred = np.diag(G[k]) * grads[k]
        num = np.abs(rate + pred)
        res[k] = np.where(num == 0, 0.0, num / (np.abs(rate) + eps))
    cross = np.zeros(T)
    bound = np.zeros(T)
    ok = np.ones(T, dtype=bool)
    off = ~np.eye(m, dtype=bool)
    for k in range(T):
        term = np.abs(G[k] * grads[k][None, :])
        tol = k_sigma * se[k] * np.abs(grads[k][None, :])
        if m > 1:
            masked = np.where(off, term, -1.0)
            i, j = np.unravel_index(np.argmax(masked), masked.shape)
            cross[k] = term[i, j]
            bound[k] = tol[i, j]
            ok[k] = bool(np.all(term[off] <= tol[off]))
    return DecouplingReport(t, res, cross, bound, ok)


@dataclass
class ExpFit:
    rate: float
    r_squared: float
    defined: bool
    points_used: int
    clipped: int


def exp_fit(rho_series, times) -> ExpFit:
    """Least-squares fit of rho(t) = 1 - exp(-c t) through log(1 - rho) = -c t."""
    rho = np.asarray(rho_series, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(rho) != len(t):
        raise ValueError("series and times differ in length")
    if len(rho) < 10:
        raise ValueError("need at least 10 points for the fit")
    keep = rho < 1
    clipped = int(np.sum(~keep))
    if clipped:
        warnings.warn(f"exp_fit: dropped {clipped} values >= 1", RuntimeWarning, stacklevel=2)
    y = np.log1p(-rho[keep])
    x = t[keep]
    if len(y) < 2:
        return ExpFit(float("nan"), 0.0, False, len(y), clipped)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0 or float(x @ x) == 0.0:
        return ExpFit(float("nan"), 0.0, False, len(y), clipped)
    c = -float(x @ y) / float(x @ x)
    ss_res = float(np.sum((y + c * x) ** 2))
    return ExpFit(c, 1.0 - ss_res / ss_tot, True, len(y), clipped)
