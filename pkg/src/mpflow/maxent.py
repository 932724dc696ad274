"""Exponential-family densities u(z) = exp(sum_i lam_i r_i(z) - logZ) on [-B, B]^d
matching prescribed monomial potentials, via tensor Gauss-Legendre quadrature."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._numerics import make_rng

MAX_DIM = 4


class SingularCovariance(np.linalg.LinAlgError):
    pass


@dataclass
class MaxEntProblem:
    family: object  # .values(Z) -> (N, m), .m, .d
    targets: np.ndarray
    box: float
    nodes: int = 40

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.family.m < 1:
            raise ValueError("need at least one monomial")
        if len(self.targets) != self.family.m:
            raise ValueError(f"{len(self.targets)} targets for {self.family.m} monomials")
        if not self.box > 0:
            raise ValueError("box half-width must be positive")
        if self.family.d > MAX_DIM:
            raise ValueError(f"dimension {self.family.d} exceeds the quadrature limit {MAX_DIM}")
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        x, w = self.box * x, self.box * w
        d = self.family.d
        self._points = np.array(list(itertools.product(x, repeat=d)))
        self._weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
        self._R = self.family.values(self._points)

    @property
    def dim(self) -> int:
        return self.family.d

    @property
    def m(self) -> int:
        return self.family.m

    def _log_weights(self, lam):
        e = self._R @ np.asarray(lam, dtype=float)
        shift = float(np.max(e))
        u = self._weights * np.exp(e - shift)
        s = float(np.sum(u))
        return u / s, shift + np.log(s)


def log_partition(lam, problem: MaxEntProblem) -> float:
    return float(problem._log_weights(lam)[1])


def moments(lam, problem: MaxEntProblem) -> np.ndarray:
    p, _ = problem._log_weights(lam)
    return problem._R.T @ p


def covariance(lam, problem: MaxEntProblem) -> np.ndarray:
    p, _ = problem._log_weights(lam)
    mu = problem._R.T @ p
    C = problem._R.T @ (p[:, None] * problem._R) - np.outer(mu, mu)
    return 0.5 * (C + C.T)


@dataclass
class MaxEntSolution:
    lam: np.ndarray
    logZ: float
    moments: np.ndarray
    iterations: int
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    condition_number: float = float("nan")

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam.tolist(),
            "logZ": self.logZ,
            "moments": self.moments.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_history": self.residual_history,
            "condition_number": self.condition_number,
        }


def solve(problem: MaxEntProblem, tol: float = 1e-10, max_iter: int = 100, lam0=None, max_cond: float = 1e12) -> MaxEntSolution:
    """Damped Newton on the convex dual logZ(lam) - lam . targets."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    t = problem.targets
    lam = np.zeros(problem.m) if lam0 is None else np.asarray(lam0, dtype=float).copy()

    def dual(x):
        return log_partition(x, problem) - x @ t

    history = []
    cond = float("nan")
    it = 0
    mu = moments(lam, problem)
    while True:
        err = float(np.max(np.abs(mu - t)))
        history.append(err)
        if err <= tol:
            break
        if it >= max_iter:
            break
        C = covariance(lam, problem)
        cond = float(np.linalg.cond(C))
        if not np.isfinite(cond) or cond > max_cond:
            if it > 0:
                # the iterates ran off towards the boundary of the moment set
                break
            raise SingularCovariance(f"covariance is singular (condition number {cond:.3e}); the monomial family is degenerate on the box")
        step = np.linalg.solve(C, mu - t)
        f0 = dual(lam)
        a = 1.0
        while a > 1e-8:
            cand = lam - a * step
            if dual(cand) <= f0 + 1e-14 * (1 + abs(f0)):
                break
            a *= 0.5
        lam = lam - a * step
        mu = moments(lam, problem)
        it += 1
    if np.isnan(cond):
        cond = float(np.linalg.cond(covariance(lam, problem)))
    return MaxEntSolution(lam, log_partition(lam, problem), mu, it, history[-1] <= tol, history, cond)


def _check_inside(problem: MaxEntProblem, z: np.ndarray) -> None:
    if np.any(np.abs(z) > problem.box):
        raise ValueError(f"point outside the box [-{problem.box}, {problem.box}]^{problem.dim}")


def density_eval(sol: MaxEntSolution, problem: MaxEntProblem, z) -> float | np.ndarray:
    z = np.asarray(z, dtype=float)
    pts = np.atleast_2d(z)
    if pts.shape[1] != problem.dim:
        raise ValueError(f"expected points of dimension {problem.dim}")
    _check_inside(problem, pts)
    v = np.exp(problem.family.values(pts) @ sol.lam - sol.logZ)
    return float(v[0]) if z.ndim == 1 else v


def normalization_adaptive(sol: MaxEntSolution, problem: MaxEntProblem) -> float:
    """Integral of u over the box by scipy's adaptive quadrature (d <= 3)."""
    B = problem.box

    def f(*args):
        return density_eval(sol, problem, np.array(args))

    val, _ = integrate.nquad(f, [(-B, B)] * problem.dim, opts={"epsabs": 1e-12, "epsrel": 1e-12, "limit": 200})
    return float(val)


def entropy(values: np.ndarray, problem: MaxEntProblem) -> float:
    """-integral u log u for density values on the quadrature grid."""
    u = np.asarray(values, dtype=float)
    safe = np.where(u > 0, u, 1.0)
    return float(-np.sum(problem._weights * u * np.log(safe)))


def grid_density(sol: MaxEntSolution, problem: MaxEntProblem) -> np.ndarray:
    return np.exp(problem._R @ sol.lam - sol.logZ)


@dataclass
class PerturbationReport:
    base_entropy: float
    entropies: np.ndarray
    moment_errors: np.ndarray
    tol: float

    @property
    def lower_count(self) -> int:
        """Perturbations with entropy below the base by more than tol."""
        return int(np.sum(self.entropies < self.base_entropy - self.tol))

    @property
    def higher_count(self) -> int:
        return int(np.sum(self.entropies > self.base_entropy + self.tol))


def entropy_perturbations(sol: MaxEntSolution, problem: MaxEntProblem, count: int = 100, seed: int = 0, tol: float = 1e-6) -> PerturbationReport:
    """Entropies of densities u + eps * phi that keep every constraint.

    phi is a reflection-symmetric pair of Gaussian bumps, projected off
    span{1, r_1..r_m} in the quadrature inner product so that mass and all
    potentials are unchanged; eps keeps the density above u / 2.
    """
    if problem.dim > 2:
        raise ValueError("perturbation check is limited to d <= 2")
    rng = make_rng(seed, 61)
    P, w = problem._points, problem._weights
    u = grid_density(sol, problem)
    basis = np.column_stack([np.ones(len(P)), problem._R])
    gram = basis.T @ (w[:, None] * basis)
    base = entropy(u, problem)
    B = problem.box
    ents, errs = [], []
    while len(ents) < count:
        c = rng.uniform(-B, B, size=problem.dim)
        s = rng.uniform(0.15 * B, 0.4 * B)
        phi = np.exp(-np.sum((P - c) ** 2, axis=1) / (2 * s * s)) + np.exp(-np.sum((P + c) ** 2, axis=1) / (2 * s * s))
        coef = np.linalg.solve(gram, basis.T @ (w * phi))
        phi = phi - basis @ coef
        neg = phi < 0
        if not np.any(neg) or np.max(np.abs(phi)) < 1e-12:
            continue
        eps = 0.5 * float(np.min(u[neg] / -phi[neg])) * rng.uniform(0.2, 1.0)
        p = u + eps * phi
        errs.append(float(np.max(np.abs(problem._R.T @ (w * p) - sol.moments))))
        ents.append(entropy(p, problem))
    return PerturbationReport(base, np.array(ents), np.array(errs), tol)
