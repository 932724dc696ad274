"""Second-variation spectrum reduced to span(R): eigenpairs of A K with
A = Hessian of L at rho_t and K the monomial kernel matrix under mu_t."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import linear_sum_assignment

from ._numerics import make_rng, mean_and_stderr, paired_mean

MAX_REDUCED_DIM = 64


class EigenSolveError(RuntimeError):
    pass


def kernel_matrix(Z, family, stderr: bool = False):
    """K_ij = particle mean of r_i r_j."""
    R = family.values(np.atleast_2d(np.asarray(Z, dtype=float)))
    q = len(R)
    K = (R.T @ R) / q
    K = 0.5 * (K + K.T)
    if not stderr:
        return K
    if q < 2:
        return K, np.zeros_like(K)
    per = R[:, :, None] * R[:, None, :]
    return K, per.std(axis=0, ddof=1) / np.sqrt(q)


def family_potentials(Z, family) -> np.ndarray:
    return paired_mean(family.values(np.atleast_2d(np.asarray(Z, dtype=float))), axis=0)


def duplicate_rows(K, tol: float = 1e-12) -> list[tuple[int, int]]:
    """Pairs (i, j), i < j, whose kernel rows coincide (duplicated monomials)."""
    K = np.asarray(K)
    out = []
    for i in range(len(K)):
        for j in range(i + 1, len(K)):
            if np.max(np.abs(K[i] - K[j])) <= tol * (1 + np.max(np.abs(K[i]))):
                out.append((i, j))
    return out


@dataclass
class ReducedEigs:
    values: np.ndarray  # (m,) complex, descending real part
    vectors: np.ndarray  # (m, m) columns, unit norm
    residuals: np.ndarray  # ||A K v - lambda v|| / ||v||
    rank: int

    @property
    def nonzero_count(self) -> int:
        return int(np.sum(np.abs(self.values) > 1e-8 * max(1.0, float(np.max(np.abs(self.values), initial=0.0)))))


def reduced_eigs(A, K) -> ReducedEigs:
    A = np.asarray(A, dtype=float)
    K = np.asarray(K, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != K.shape:
        raise ValueError(f"A and K must be square of equal size, got {A.shape} and {K.shape}")
    m = len(A)
    if m > MAX_REDUCED_DIM:
        raise ValueError(f"reduced dimension {m} exceeds the limit {MAX_REDUCED_DIM}")
    M = A @ K
    try:
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(f"eigensolver failed: {exc}") from exc
    order = np.lexsort((-w.imag, -w.real))
    w, V = w[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    res = np.linalg.norm(M @ V - V * w[None, :], axis=0)
    rank = int(np.linalg.matrix_rank(M, tol=1e-8)) if m else 0
    return ReducedEigs(w, V, res, rank)


def symmetric_eigs_oracle(A, K) -> np.ndarray:
    """Eigenvalues of K^{1/2} A K^{1/2} (similar to A K when K is PSD), descending."""
    S = np.real(sqrtm(np.asarray(K, dtype=float)))
    return np.sort(np.linalg.eigvalsh(S @ np.asarray(A) @ S))[::-1]


def inverse_iteration(M, shift: float, iters: int = 50, seed_vector=None) -> tuple[float, np.ndarray]:
    """Shifted inverse iteration for the eigenpair of M nearest ``shift``."""
    M = np.asarray(M, dtype=float)
    m = len(M)
    v = np.ones(m) / np.sqrt(m) if seed_vector is None else np.asarray(seed_vector, dtype=float)
    B = M - shift * np.eye(m)
    lam = shift
    for _ in range(iters):
        try:
            u = np.linalg.solve(B, v)
        except np.linalg.LinAlgError:
            # shift hit an eigenvalue exactly
            B = M - (shift + 1e-10) * np.eye(m)
            u = np.linalg.solve(B, v)
        v = u / np.linalg.norm(u)
        lam = float(v @ M @ v)
    return lam, v


@dataclass
class SpectrumFrame:
    t: float
    hessian: np.ndarray
    kernel: np.ndarray
    eigs: np.ndarray
    vectors: np.ndarray | None = None
    residuals: np.ndarray | None = None

    @classmethod
    def build(cls, t: float, A, K) -> "SpectrumFrame":
        r = reduced_eigs(A, K)
        return cls(float(t), np.asarray(A), np.asarray(K), r.values, r.vectors, r.residuals)


def frames_from_trajectory(traj, loss) -> list[SpectrumFrame]:
    """One frame per particle snapshot; both A and K are evaluated at that snapshot."""
    if not traj.snapshots:
        raise ValueError("trajectory has no particle snapshots")
    frames = []
    for t, Z in zip(traj.snapshot_times, traj.snapshots):
        rho = family_potentials(Z, loss.family)
        frames.append(SpectrumFrame.build(t, loss.hess(rho), kernel_matrix(Z, loss.family)))
    return frames


@dataclass
class Crossing:
    index: int
    t_cross: float


@dataclass
class CrossingReport:
    crossings: list[Crossing] = field(default_factory=list)
    ambiguous_frames: list[int] = field(default_factory=list)
    complex_frames: list[int] = field(default_factory=list)
    tracks: np.ndarray | None = None  # (T, m) continued eigenvalues

    def to_json_dict(self) -> dict:
        return {
            "crossings": [{"index": c.index, "t_cross": c.t_cross} for c in self.crossings],
            "ambiguous_frames": self.ambiguous_frames,
            "complex_frames": self.complex_frames,
        }


def track_crossings(frames: list[SpectrumFrame], imag_tol: float = 1e-6, zero_tol: float = 1e-8, swap_ratio: float = 2.0) -> CrossingReport:
    """Continue eigenvalues by nearest-neighbour matching and report sign changes.

    A value that is exactly (or numerically) zero carries no sign; a crossing
    is placed by linear interpolation between the bracketing signed values.
    """
    report = CrossingReport()
    if not frames:
        report.tracks = np.zeros((0, 0))
        return report
    times = [f.t for f in frames]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("frames must be strictly time-ordered")
    m = len(frames[0].eigs)
    tracks = np.empty((len(frames), m), dtype=complex)
    tracks[0] = frames[0].eigs
    for k, f in enumerate(frames):
        if np.any(np.abs(np.asarray(f.eigs).imag) > imag_tol):
            report.complex_frames.append(k)
        if k == 0:
            continue
        prev, cur = tracks[k - 1], np.asarray(f.eigs)
        cost = np.abs(prev[:, None] - cur[None, :])
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(m, dtype=int)
        perm[rows] = cols
        tracks[k] = cur[perm]
        # a possible swap: some other eigenvalue is about as close as the match.
        # Moves inside the numerically-zero cluster are not counted.
        floor_k = zero_tol * max(1.0, float(np.max(np.abs(cur))))
        chosen = cost[np.arange(m), perm]
        rival = np.where(np.eye(m, dtype=bool)[perm], np.inf, cost).min(axis=1) if m > 1 else np.full(m, np.inf)
        unclear = (rival <= swap_ratio * chosen) & (np.abs(cur[perm]) > floor_k) & (chosen > floor_k)
        swaps = int(np.sum(unclear)) // 2
        if swaps >= 2:
            report.ambiguous_frames.append(k)
    re = tracks.real
    # values at rounding level of the frame's spectrum have no definite sign
    floor = zero_tol * np.maximum(1.0, np.max(np.abs(tracks), axis=1))
    for i in range(m):
        last = None  # (frame, value) of the last value with a definite sign
        for k in range(len(frames)):
            v = re[k, i]
            if abs(v) <= floor[k]:
                continue
            if last is not None and (last[1] > 0) != (v > 0):
                k0, a = last
                tc = times[k0] + (times[k] - times[k0]) * a / (a - v)
                report.crossings.append(Crossing(i, float(tc)))
            last = (k, v)
    report.crossings.sort(key=lambda c: c.t_cross)
    report.tracks = tracks
    return report


def second_variation_quadform(coeffs, A, K) -> float:
    """(K c)^T A (K c)."""
    v = np.asarray(K, dtype=float) @ np.asarray(coeffs, dtype=float)
    return float(v @ np.asarray(A, dtype=float) @ v)


def second_variation_quadform_sum(coeffs, A, K) -> float:
    """The same form as an explicit double sum over (i, j)."""
    v = np.asarray(K, dtype=float) @ np.asarray(coeffs, dtype=float)
    A = np.asarray(A, dtype=float)
    total = 0.0
    for i in range(len(v)):
        for j in range(len(v)):
            total += A[i, j] * v[i] * v[j]
    return total


@dataclass(frozen=True)
class QuadformMC:
    estimate: float
    std_error: float
    exact: float


def quadform_monte_carlo(coeffs, A, family, N: int, seed: int, exact_kernel=None) -> QuadformMC:
    """Evaluate the second variation through its double-integral form.

    <Lf, f> = sum_ij A_ij E[f r_i] E[f r_j] with E under N(0, I).  The inner
    expectations g_i = E[f r_i] are estimated from N Gaussian samples; the
    standard error follows from the delta method with gradient 2 A g.
    """
    c = np.asarray(coeffs, dtype=float)
    A = np.asarray(A, dtype=float)
    Z = make_rng(seed, 51).standard_normal((N, family.d))
    R = family.values(Z)
    f = R @ c
    prod = f[:, None] * R  # samples of f r_i
    g, _ = mean_and_stderr(prod, axis=0)
    cov = np.cov(prod, rowvar=False).reshape(len(c), len(c)) / N
    grad = 2 * A @ g
    est = float(g @ A @ g)
    se = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    exact = float("nan") if exact_kernel is None else second_variation_quadform(c, A, exact_kernel)
    return QuadformMC(est, se, exact)
