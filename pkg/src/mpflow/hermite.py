"""Probabilists' Hermite polynomials with multi-indices.

h_alpha(z) = prod_l He_{alpha_l}(z_l), He_0 = 1, He_1 = x, He_{k+1} = x He_k - k He_{k-1}.
These are orthogonal under N(0, I) with E[h_alpha h_beta] = delta_{alpha beta} prod_l alpha_l!.
A monic monomial prod_{i in I} z_i is h_alpha with alpha the indicator of I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from ._numerics import make_rng, mean_and_stderr, paired_sum


@dataclass(frozen=True)
class HermiteIndex:
    alpha: tuple[int, ...]

    def __post_init__(self):
        a = tuple(int(x) for x in self.alpha)
        if any(x < 0 for x in a):
            raise ValueError(f"multi-index entries must be non-negative, got {a}")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def from_monomial(cls, indices, d: int) -> "HermiteIndex":
        """Indicator multi-index of a set of (0-based) variable indices."""
        a = [0] * d
        for i in indices:
            if not 0 <= i < d:
                raise IndexError(f"variable index {i} out of range for d={d}")
            a[i] = 1
        return cls(tuple(a))

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def degree(self) -> int:
        return sum(self.alpha)

    @property
    def norm_sq(self) -> int:
        """E[h_alpha^2] under N(0, I)."""
        return math.prod(math.factorial(a) for a in self.alpha)

    def lowered(self, l: int) -> "HermiteIndex":
        a = list(self.alpha)
        a[l] -= 1
        return HermiteIndex(tuple(a))

    def __sub__(self, other: "HermiteIndex") -> "HermiteIndex":
        return HermiteIndex(tuple(x - y for x, y in zip(self.alpha, other.alpha, strict=True)))

    def __add__(self, other: "HermiteIndex") -> "HermiteIndex":
        return HermiteIndex(tuple(x + y for x, y in zip(self.alpha, other.alpha, strict=True)))

    @classmethod
    def unit(cls, l: int, d: int) -> "HermiteIndex":
        a = [0] * d
        a[l] = 1
        return cls(tuple(a))


def _as_index(alpha) -> HermiteIndex:
    return alpha if isinstance(alpha, HermiteIndex) else HermiteIndex(tuple(alpha))


def he_table(x: np.ndarray, kmax: int) -> np.ndarray:
    """He_0..He_kmax at x, stacked on a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    for k in range(1, kmax):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def he(k: int, x) -> np.ndarray:
    return he_table(x, k)[k]


def hermite_eval(alpha, z) -> np.ndarray:
    """h_alpha at z; z may be a single d-vector or an (N, d) array."""
    alpha = _as_index(alpha)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != alpha.d:
        raise ValueError(f"point dimension {z.shape[-1]} does not match multi-index dimension {alpha.d}")
    out = np.ones(z.shape[:-1])
    for l, a in enumerate(alpha.alpha):
        if a:
            out = out * he(a, z[..., l])
    return out


def hermite_grad(alpha, z) -> np.ndarray:
    """Gradient of h_alpha: component l is alpha_l h_{alpha - e_l}(z)."""
    alpha = _as_index(alpha)
    z = np.asarray(z, dtype=float)
    g = np.zeros(z.shape)
    for l, a in enumerate(alpha.alpha):
        if a:
            g[..., l] = a * hermite_eval(alpha.lowered(l), z)
    return g


@dataclass(frozen=True)
class MCResult:
    mean: float
    std_error: float

    def within(self, value: float, k: float = 5.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error


def gaussian_expectation(f, d: int, N: int, seed: int, shards: int = 1) -> MCResult:
    """Monte Carlo estimate of E[f(Z)], Z ~ N(0, I_d).

    ``f`` maps an (N, d) array to N values.  Shards draw from independent
    streams and are concatenated in shard order, so the result depends only on
    (seed, N, shards).
    """
    if N < 2:
        raise ValueError("need at least two samples")
    sizes = [N // shards + (1 if i < N % shards else 0) for i in range(shards)]
    vals = np.concatenate([np.asarray(f(make_rng(seed, 21, i).standard_normal((s, d))), dtype=float) for i, s in enumerate(sizes)])
    if np.all(vals == vals[0]):
        return MCResult(float(vals[0]), 0.0)
    mean, se = mean_and_stderr(vals)
    return MCResult(float(mean), float(se))


def gauss_hermite_expectation(f, d: int, nodes: int = 40) -> float:
    """Tensor Gauss-Hermite (probabilists' weight) estimate of E[f(Z)], Z ~ N(0, I_d)."""
    if d > 3:
        raise ValueError("tensor quadrature path is limited to d <= 3")
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(len(pts))
    for wg in np.meshgrid(*([w] * d), indexing="ij"):
        wts = wts * wg.ravel()
    return float(np.sum(wts * np.asarray(f(pts), dtype=float)))


def multi_indices(d: int, max_degree: int) -> list[HermiteIndex]:
    return [HermiteIndex(a) for a in product(range(max_degree + 1), repeat=d) if sum(a) <= max_degree]


@dataclass(frozen=True)
class ParityResult:
    value: float
    predicted_zero: bool
    total_degree: int


def parity_zero_check(alpha, beta, gamma, e1: int, e2: int, mu) -> ParityResult:
    """Integral of h_{alpha-e1-e2} h_{beta-e1} h_{gamma-e2} against a weighted measure.

    ``e1``/``e2`` are the positions of the unit multi-indices.  The integrand
    is odd, hence integrates to zero against a reflection-symmetric measure,
    when |alpha| + |beta| + |gamma| - 4 is odd.
    """
    alpha, beta, gamma = (_as_index(x) for x in (alpha, beta, gamma))
    d = alpha.d
    u1, u2 = HermiteIndex.unit(e1, d), HermiteIndex.unit(e2, d)
    try:
        i1 = alpha - u1 - u2
        i2 = beta - u1
        i3 = gamma - u2
    except ValueError as exc:
        raise ValueError("lowering produced a negative multi-index entry") from exc
    pts = np.asarray(mu.points, dtype=float)
    vals = hermite_eval(i1, pts) * hermite_eval(i2, pts) * hermite_eval(i3, pts)
    value = float(paired_sum(np.asarray(mu.weights) * vals))
    total = alpha.degree + beta.degree + gamma.degree - 4
    return ParityResult(value, total % 2 == 1, total)


def he_exact(k: int, x: float) -> float:
    """He_k(x) from the closed-form coefficients, summed in exact rational arithmetic."""
    xf = Fraction(float(x))
    total = Fraction(0)
    for j in range(k // 2 + 1):
        coef = (-1) ** j * math.factorial(k) // (math.factorial(j) * math.factorial(k - 2 * j) * 2**j)
        total += coef * xf ** (k - 2 * j)
    return float(total)


def recurrence_residual(kmax: int, x) -> float:
    """max |He_{k+1} - x He_k + k He_{k-1}| over k = 1..kmax, He from ``he_exact``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    table = np.array([[he_exact(k, v) for v in xs] for k in range(kmax + 2)])
    worst = 0.0
    for k in range(1, kmax + 1):
        worst = max(worst, float(np.max(np.abs(table[k + 1] - xs * table[k] + k * table[k - 1]))))
    return worst


def table_deviation(kmax: int, x) -> float:
    """max relative gap between the recurrence table and ``he_exact``."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    exact = np.array([[he_exact(k, v) for v in xs] for k in range(kmax + 1)])
    return float(np.max(np.abs(he_table(xs, kmax) - exact) / np.maximum(1.0, np.abs(exact))))
