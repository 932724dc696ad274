"""Finite weighted measures with mass addition and coupling product.

Monomial potentials (unnormalized integrals of monic monomials) turn ``+``
into addition and ``*`` into multiplication of numbers.  Measures are never
compared pointwise; all checks go through ``mp_eval`` on a monomial family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._numerics import make_rng

DEFAULT_PRODUCT_CAP = 10**6


class ProductTooLarge(ValueError):
    pass


@dataclass
class WeightedMeasure:
    dim: int
    points: np.ndarray  # (q, dim), real or complex
    weights: np.ndarray  # (q,)
    stochastic: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        pts = np.asarray(self.points)
        if pts.size == 0:
            pts = np.zeros((0, self.dim))
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (q, {self.dim}), got {pts.shape}")
        if not np.iscomplexobj(pts):
            pts = pts.astype(float)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError("points and weights differ in length")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("points and weights must be finite")
        self.points, self.weights = pts, w

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @classmethod
    def zero(cls, dim: int) -> "WeightedMeasure":
        return cls(dim, np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def identity(cls, dim: int) -> "WeightedMeasure":
        """Unit point mass at the all-ones vector."""
        return cls(dim, np.ones((1, dim)), np.ones(1))

    @classmethod
    def point_mass(cls, point, weight: float = 1.0) -> "WeightedMeasure":
        p = np.atleast_2d(np.asarray(point))
        return cls(p.shape[1], p, [weight])

    @classmethod
    def empirical(cls, points) -> "WeightedMeasure":
        p = np.asarray(points)
        return cls(p.shape[1], p, np.full(len(p), 1.0 / len(p)))

    def symmetrized(self) -> "WeightedMeasure":
        """Closure under z -> -z with equal weights, stored as [Z; -Z]."""
        return WeightedMeasure(self.dim, np.concatenate([self.points, -self.points]), np.concatenate([self.weights, self.weights]))

    def normalized(self) -> "WeightedMeasure":
        return WeightedMeasure(self.dim, self.points, self.weights / self.mass)

    def to_json_dict(self) -> dict:
        pts = self.points
        if np.iscomplexobj(pts):
            plist = [[[float(v.real), float(v.imag)] for v in row] for row in pts]
        else:
            plist = pts.tolist()
        return {"dim": self.dim, "points": plist, "weights": self.weights.tolist()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "WeightedMeasure":
        dim = int(obj["dim"])
        pts = np.asarray(obj["points"], dtype=float)
        if pts.ndim == 3:  # [re, im] pairs
            pts = pts[..., 0] + 1j * pts[..., 1]
        return cls(dim, pts.reshape(-1, dim), obj["weights"])

    @classmethod
    def load(cls, path) -> "WeightedMeasure":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))


@dataclass(frozen=True)
class MonomialSpec:
    """Monic monomial prod_{i in indices} z_i, indices 0-based."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        if not idx:
            raise ValueError("a monomial needs at least one variable")
        if idx[0] < 0:
            raise ValueError("variable indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.prod(points[:, list(self.indices)], axis=1)


def load_family(path) -> list[MonomialSpec]:
    """Monomial family file: JSON list of index lists, or ``{"monomials": [...]}``."""
    obj = json.loads(Path(path).read_text())
    if isinstance(obj, dict):
        obj = obj["monomials"]
    return [MonomialSpec(tuple(x)) for x in obj]


def mp_eval(mu: WeightedMeasure, r: MonomialSpec):
    """sum_i w_i prod_{k in I} z_ik (not divided by the mass)."""
    if r.indices[-1] >= mu.dim:
        raise IndexError(f"monomial index {r.indices[-1]} out of range for dimension {mu.dim}")
    if mu.size == 0:
        return 0.0
    v = mu.weights @ r(mu.points)
    return complex(v) if np.iscomplexobj(v) else float(v)


def add(mu1: WeightedMeasure, mu2: WeightedMeasure) -> WeightedMeasure:
    if mu1.dim != mu2.dim:
        raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
    return WeightedMeasure(
        mu1.dim,
        np.concatenate([mu1.points, mu2.points]),
        np.concatenate([mu1.weights, mu2.weights]),
        stochastic=mu1.stochastic or mu2.stochastic,
    )


def mul(mu1: WeightedMeasure, mu2: WeightedMeasure, cap: int = DEFAULT_PRODUCT_CAP, subsample: int | None = None, seed: int = 0) -> WeightedMeasure:
    """Law of z1 * z2 (elementwise) for independent z1 ~ mu1, z2 ~ mu2.

    Exact when q1 * q2 <= cap.  Otherwise ``subsample`` pairs are drawn with
    probability proportional to w1_i w2_j and given equal shares of the
    product mass; the result is flagged stochastic.
    """
    if mu1.dim != mu2.dim:
        raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
    q1, q2 = mu1.size, mu2.size
    if q1 * q2 <= cap:
        pts = (mu1.points[:, None, :] * mu2.points[None, :, :]).reshape(-1, mu1.dim)
        w = np.outer(mu1.weights, mu2.weights).reshape(-1)
        return WeightedMeasure(mu1.dim, pts, w, stochastic=mu1.stochastic or mu2.stochastic)
    if subsample is None:
        raise ProductTooLarge(f"product of {q1} x {q2} points exceeds cap {cap}; pass subsample=<count>")
    rng = make_rng(seed, 31)
    m1, m2 = mu1.mass, mu2.mass
    i = rng.choice(q1, size=subsample, p=mu1.weights / m1)
    j = rng.choice(q2, size=subsample, p=mu2.weights / m2)
    return WeightedMeasure(mu1.dim, mu1.points[i] * mu2.points[j], np.full(subsample, m1 * m2 / subsample), stochastic=True)


@dataclass
class Partition:
    zeros: list[int]
    ones: list[int]
    neither: list[int]

    def as_sets(self) -> tuple[frozenset, frozenset]:
        return frozenset(self.zeros), frozenset(self.ones)


def classify_01(mu: WeightedMeasure, family: list[MonomialSpec], tol: float = 1e-8) -> Partition:
    """Split family indices by whether the potential is 0, 1 or neither (within tol)."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    zeros, ones, neither = [], [], []
    for i, r in enumerate(family):
        v = mp_eval(mu, r)
        if abs(v) <= tol:
            zeros.append(i)
        elif abs(v - 1) <= tol:
            ones.append(i)
        else:
            neither.append(i)
    return Partition(zeros, ones, neither)


@dataclass
class ComposeReport:
    family_size: int
    mul_predicted: tuple[list[int], list[int]]
    mul_observed: tuple[list[int], list[int]]
    add_predicted: tuple[list[int], list[int]]
    add_observed: tuple[list[int], list[int]]
    per_monomial: list[dict]

    @property
    def passed(self) -> bool:
        return all(row["mul_ok"] and row["add_ok"] for row in self.per_monomial)

    def to_json_dict(self) -> dict:
        return {
            "family_size": self.family_size,
            "passed": self.passed,
            "mul": {"predicted": {"zeros": self.mul_predicted[0], "ones": self.mul_predicted[1]},
                    "observed": {"zeros": self.mul_observed[0], "ones": self.mul_observed[1]}},
            "add": {"predicted": {"zeros": self.add_predicted[0], "ones": self.add_predicted[1]},
                    "observed": {"zeros": self.add_observed[0], "ones": self.add_observed[1]}},
            "per_monomial": self.per_monomial,
        }


def compose_check(mu1: WeightedMeasure, mu2: WeightedMeasure, family: list[MonomialSpec], tol: float = 1e-8) -> ComposeReport:
    """Check the 0/1-sets of mu1 * mu2 and mu1 + mu2 against the composition rules.

    Product: (R0 | S0, R1 & S1).  Sum: (R0 & S0, (R1 & S0) | (R0 & S1)).
    A monomial passes when its observed class agrees with every prediction
    that covers it; monomials outside the predicted sets are unconstrained.
    """
    p1, p2 = classify_01(mu1, family, tol), classify_01(mu2, family, tol)
    R0, R1 = p1.as_sets()
    S0, S1 = p2.as_sets()
    pm, pa = classify_01(mul(mu1, mu2), family, tol), classify_01(add(mu1, mu2), family, tol)
    mul0, mul1 = R0 | S0, R1 & S1
    add0, add1 = R0 & S0, (R1 & S0) | (R0 & S1)
    om0, om1 = pm.as_sets()
    oa0, oa1 = pa.as_sets()
    rows = []
    for i in range(len(family)):
        mul_ok = (i not in mul0 or i in om0) and (i not in mul1 or i in om1)
        add_ok = (i not in add0 or i in oa0) and (i not in add1 or i in oa1)
        rows.append({"index": i, "monomial": list(family[i].indices), "mul_ok": bool(mul_ok), "add_ok": bool(add_ok)})
    return ComposeReport(
        family_size=len(family),
        mul_predicted=(sorted(mul0), sorted(mul1)),
        mul_observed=(sorted(om0), sorted(om1)),
        add_predicted=(sorted(add0), sorted(add1)),
        add_observed=(sorted(oa0), sorted(oa1)),
        per_monomial=rows,
    )
