"""Monomial potentials of the Abelian task and the loss written in them.

With mean-over-pairs normalization and unit basis scale the network loss is

    H = (1/n) * sum_{k != 0} l_k + (n-1)/n

    l_k = -2 Re rho_kkk + sum_{k1,k2} |rho_{k1 k2 k}|^2
          + 1/4 |sum_p sum_k' rho_{p,k',-k',k}|^2
          + 1/4 sum_{m != 0} sum_p |sum_k' rho_{p,k',m-k',k}|^2

All frequency indices are nonzero; a wrapped index that lands on 0 drops the
term.  ``calibrate`` recovers the prefactor 1/n and the constants from the
direct loss instead of taking them on faith.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._numerics import paired_mean
from .abelian_task import Normalization, ParticleSystem, direct_loss
from .group_fourier import FourierBasis


@dataclass
class AbelianMPVector:
    n: int
    rho3: np.ndarray  # (n-1, n-1, n-1): [k1, k2, k]
    rhoP: np.ndarray  # (2, n-1, n-1, n-1): [p, k1, k2, k]

    def __post_init__(self):
        m = self.n - 1
        self.rho3 = np.asarray(self.rho3, dtype=complex)
        self.rhoP = np.asarray(self.rhoP, dtype=complex)
        if self.rho3.shape != (m, m, m) or self.rhoP.shape != (2, m, m, m):
            raise ValueError("MP tensor shapes do not match the group order")

    def flat(self) -> np.ndarray:
        """Complex coordinates: rho3 then rhoP, both C-order."""
        return np.concatenate([self.rho3.ravel(), self.rhoP.ravel()])

    def real_coords(self) -> np.ndarray:
        f = self.flat()
        return np.concatenate([f.real, f.imag])

    @classmethod
    def from_real_coords(cls, n: int, x) -> "AbelianMPVector":
        x = np.asarray(x, dtype=float)
        M = 3 * (n - 1) ** 3
        f = x[:M] + 1j * x[M:]
        m = n - 1
        return cls(n, f[: m**3].reshape(m, m, m), f[m**3 :].reshape(2, m, m, m))

    @classmethod
    def zeros(cls, n: int) -> "AbelianMPVector":
        m = n - 1
        return cls(n, np.zeros((m, m, m)), np.zeros((2, m, m, m)))

    def to_json_dict(self) -> dict:
        """Every coordinate with its explicit index label."""
        fr = range(1, self.n)
        entries = []
        for i, k1 in enumerate(fr):
            for j, k2 in enumerate(fr):
                for l, k in enumerate(fr):
                    v = self.rho3[i, j, l]
                    entries.append({"kind": "rho", "k1": k1, "k2": k2, "k": k, "re": float(v.real), "im": float(v.imag)})
        for p, role in enumerate("ab"):
            for i, k1 in enumerate(fr):
                for j, k2 in enumerate(fr):
                    for l, k in enumerate(fr):
                        v = self.rhoP[p, i, j, l]
                        entries.append({"kind": f"rho_{role}", "k1": k1, "k2": k2, "k": k, "re": float(v.real), "im": float(v.imag)})
        return {"n": self.n, "entries": entries}


def eval_mps(ps: ParticleSystem) -> AbelianMPVector:
    za, zb, zc = ps.coeffs[:, 0], ps.coeffs[:, 1], ps.coeffs[:, 2]
    q = ps.q
    rho3 = np.einsum("ja,jb,jc->abc", za, zb, zc) / q
    rhoP = np.stack([np.einsum("ja,jb,jc->abc", zp, zp, zc) / q for zp in (za, zb)])
    return AbelianMPVector(ps.n, rho3, rhoP)


# ---------------------------------------------------------------------------
# the decomposition


@lru_cache(maxsize=None)
def _wrap_tables(n: int):
    """Index lists for the two 1/4-weighted groups of l_k.

    Returns ``neg`` (pairs (k', -k') as array indices) and ``shift[m]`` (pairs
    (k', m-k') with m-k' != 0), all over nonzero frequencies.
    """
    fr = range(1, n)
    neg = [(kp - 1, (-kp) % n - 1) for kp in fr]
    shift = {m: [(kp - 1, (m - kp) % n - 1) for kp in fr if (m - kp) % n != 0] for m in fr}
    return neg, shift


def ell_terms(mps: AbelianMPVector) -> np.ndarray:
    """l_k for k = 1..n-1."""
    n = mps.n
    neg, shift = _wrap_tables(n)
    rho3, rhoP = mps.rho3, mps.rhoP
    diag = np.array([rho3[i, i, i] for i in range(n - 1)])
    out = -2.0 * diag.real
    out = out + np.sum(np.abs(rho3) ** 2, axis=(0, 1))
    ia, ib = (np.array(t) for t in zip(*neg))
    s_neg = rhoP[:, ia, ib, :].sum(axis=(0, 1))  # (n-1,) over k
    out = out + 0.25 * np.abs(s_neg) ** 2
    for m, pairs in shift.items():
        if not pairs:
            continue
        ia, ib = (np.array(t) for t in zip(*pairs))
        s = rhoP[:, ia, ib, :].sum(axis=1)  # (2, n-1)
        out = out + 0.25 * np.sum(np.abs(s) ** 2, axis=0)
    return out


@dataclass(frozen=True)
class Calibration:
    """Constants tying the direct loss to the decomposition.

    ``prefactor`` multiplies sum_k l_k and ``constant`` is the additive term.
    """

    n: int
    c_norm: float
    scale: float
    prefactor: float
    constant: float
    fit_residual: float = 0.0

    @classmethod
    def default(cls, n: int) -> "Calibration":
        return cls(n=n, c_norm=1.0 / n**2, scale=1.0, prefactor=1.0 / n, constant=(n - 1) / n)

    @property
    def normalization(self) -> Normalization:
        return Normalization(c_norm=self.c_norm)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "c_norm": self.c_norm,
            "scale": self.scale,
            "prefactor": self.prefactor,
            "constant": self.constant,
            "fit_residual": self.fit_residual,
            "pair_normalization": "mean",
        }


def decomposed_loss(mps: AbelianMPVector, calib: Calibration | None = None) -> float:
    calib = calib or Calibration.default(mps.n)
    return float(calib.prefactor * np.sum(ell_terms(mps)) + calib.constant)


def _ell_parts(mps: AbelianMPVector) -> tuple[float, float]:
    """(sum of the linear parts, sum of the quadratic parts) of sum_k l_k."""
    n = mps.n
    lin = float(-2.0 * sum(mps.rho3[i, i, i].real for i in range(n - 1)))
    return lin, float(np.sum(ell_terms(mps)) - lin)


def calibrate(n: int, draws: int = 5, seed: int = 20240917, q: int = 3) -> Calibration:
    """Pin (c_norm, scale, prefactor, constant) from the direct loss.

    The raw loss (unit pair weight, unit scale) is fit by least squares as
    alpha * linear + beta * quadratic + gamma over the zero parameter and
    ``draws`` random parameters.  For basis scale s the raw coefficients are
    alpha = n s^3, beta = n s^6, gamma = n (n-1); the scale that balances the
    two parts solves alpha s^3 = beta s^6, and mean-over-pairs fixes
    c_norm = 1/n^2.
    """
    raw = Normalization(c_norm=1.0)
    basis = FourierBasis(n, 1.0)
    systems = [ParticleSystem.zeros(n, q)] + [ParticleSystem.random(n, q, seed + i, scale=0.7) for i in range(draws)]
    X, y = [], []
    for ps in systems:
        lin, quad = _ell_parts(eval_mps(ps))
        X.append([lin, quad, 1.0])
        y.append(direct_loss(ps, basis, raw))
    X, y = np.array(X), np.array(y)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    alpha, beta, gamma = coef
    resid = float(np.max(np.abs(X @ coef - y)) / (1 + np.max(np.abs(y))))
    # rescaling the basis by s multiplies the two parts by s^3 and s^6
    s3 = alpha / beta
    c_norm = 1.0 / n**2
    return Calibration(
        n=n,
        c_norm=c_norm,
        scale=float(np.cbrt(s3)),
        prefactor=float(c_norm * alpha * s3),
        constant=float(c_norm * gamma),
        fit_residual=resid,
    )


@dataclass(frozen=True)
class Residual:
    direct: float
    decomposed: float
    delta: float

    def within(self, rtol: float = 1e-8) -> bool:
        return abs(self.delta) <= rtol * (1 + abs(self.direct))


def decomposition_residual(ps: ParticleSystem, calib: Calibration | None = None) -> Residual:
    calib = calib or Calibration.default(ps.n)
    basis = FourierBasis(ps.n, calib.scale)
    h = direct_loss(ps, basis, calib.normalization)
    d = decomposed_loss(eval_mps(ps), calib)
    return Residual(h, d, h - d)


# ---------------------------------------------------------------------------
# 0/1 targets


@dataclass
class TargetAssignment:
    n: int
    rho3: np.ndarray
    rhoP: np.ndarray

    @classmethod
    def boolean_solution(cls, n: int) -> "TargetAssignment":
        """rho_kkk = 1 for k != 0, every other coordinate 0."""
        m = n - 1
        rho3 = np.zeros((m, m, m))
        for i in range(m):
            rho3[i, i, i] = 1.0
        return cls(n, rho3, np.zeros((2, m, m, m)))

    def as_mps(self) -> AbelianMPVector:
        return AbelianMPVector(self.n, self.rho3, self.rhoP)


def distance_to_01(mps: AbelianMPVector, target: TargetAssignment) -> float:
    if mps.n != target.n:
        raise ValueError("MP vector and target have different group orders")
    d3 = np.abs(mps.rho3 - target.rho3)
    dP = np.abs(mps.rhoP - target.rhoP)
    return float(max(d3.max(initial=0.0), dP.max(initial=0.0)))


def ell_csv(mps: AbelianMPVector) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "ell_k"])
    for k, v in zip(range(1, mps.n), ell_terms(mps)):
        w.writerow([k, repr(float(v))])
    return buf.getvalue()


def mps_json(mps: AbelianMPVector) -> str:
    return json.dumps(mps.to_json_dict())


# ---------------------------------------------------------------------------
# the Abelian loss as a separable loss over real MP coordinates


def _groups(n: int):
    """(linear coefficient vector, list of (complex index array, weight)) for sum_k l_k."""
    m = n - 1
    M = 3 * m**3
    i3 = np.arange(m**3).reshape(m, m, m)
    iP = m**3 + np.arange(2 * m**3).reshape(2, m, m, m)
    b = np.zeros(2 * M)
    groups: list[tuple[np.ndarray, float]] = []
    neg, shift = _wrap_tables(n)
    for c in range(m):
        b[i3[c, c, c]] = -2.0
        for a in range(m):
            for bb in range(m):
                groups.append((np.array([i3[a, bb, c]]), 1.0))
        groups.append((np.array([iP[p, ia, ib, c] for p in range(2) for ia, ib in neg]), 0.25))
        for pairs in shift.values():
            if not pairs:
                continue
            for p in range(2):
                groups.append((np.array([iP[p, ia, ib, c] for ia, ib in pairs]), 0.25))
    return b, groups


def abelian_quadratic_form(n: int, calib: Calibration | None = None):
    """(Q, b, const) with H = 1/2 x^T Q x + b^T x + const over real MP coordinates x."""
    calib = calib or Calibration.default(n)
    M = 3 * (n - 1) ** 3
    b, groups = _groups(n)
    Q = np.zeros((2 * M, 2 * M))
    for idx, w in groups:
        for off in (0, M):
            j = idx + off
            Q[np.ix_(j, j)] += 2.0 * w
    return calib.prefactor * Q, calib.prefactor * b, calib.constant


class AbelianFamily:
    """Real and imaginary parts of the Abelian MP monomials as functions of a particle.

    A particle is the real-pair vector ``[Re z.ravel(), Im z.ravel()]`` with
    ``z`` of shape (3, n-1); features follow ``AbelianMPVector.real_coords``.
    """

    def __init__(self, n: int):
        self.n = n
        self.d = 6 * (n - 1)
        self.m = 6 * (n - 1) ** 3

    def _z(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return ParticleSystem.from_real(self.n, Z).coeffs

    def _complex_features(self, z):
        za, zb, zc = z[:, 0], z[:, 1], z[:, 2]
        f3 = np.einsum("ja,jb,jc->jabc", za, zb, zc).reshape(len(z), -1)
        fP = np.stack([np.einsum("ja,jb,jc->jabc", zp, zp, zc) for zp in (za, zb)], axis=1).reshape(len(z), -1)
        return np.concatenate([f3, fP], axis=1)

    def values(self, Z) -> np.ndarray:
        f = self._complex_features(self._z(Z))
        return np.concatenate([f.real, f.imag], axis=1)

    def _complex_jacobian(self, z):
        """d f / d z, shape (q, 3(n-1)^3, 3(n-1))."""
        q, m = len(z), self.n - 1
        za, zb, zc = z[:, 0], z[:, 1], z[:, 2]
        eye = np.eye(m)
        J3 = np.zeros((q, m, m, m, 3, m), dtype=complex)
        J3[..., 0, :] = np.einsum("jb,jc,ax->jabcx", zb, zc, eye)
        J3[..., 1, :] = np.einsum("ja,jc,bx->jabcx", za, zc, eye)
        J3[..., 2, :] = np.einsum("ja,jb,cx->jabcx", za, zb, eye)
        JP = np.zeros((q, 2, m, m, m, 3, m), dtype=complex)
        for p, zp in enumerate((za, zb)):
            JP[:, p, ..., p, :] = np.einsum("jb,jc,ax->jabcx", zp, zc, eye) + np.einsum("ja,jc,bx->jabcx", zp, zc, eye)
            JP[:, p, ..., 2, :] = np.einsum("ja,jb,cx->jabcx", zp, zp, eye)
        return np.concatenate([J3.reshape(q, m**3, 3 * m), JP.reshape(q, 2 * m**3, 3 * m)], axis=1)

    def grads(self, Z) -> np.ndarray:
        """(q, m, d) real Jacobian of the features."""
        J = self._complex_jacobian(self._z(Z))
        top = np.concatenate([J.real, -J.imag], axis=2)  # d Re f / d(x, y)
        bot = np.concatenate([J.imag, J.real], axis=2)  # d Im f / d(x, y)
        return np.concatenate([top, bot], axis=1)

    def velocity(self, Z, dL) -> np.ndarray:
        """sum_j dL_j grad r_j at every particle, without forming the Jacobian.

        With w = u - i v for weights (u, v) on (Re f, Im f), the field is the
        real-pair gradient of Re(sum_j w_j f_j), a holomorphic polynomial.
        """
        z = self._z(Z)
        m = self.n - 1
        M = 3 * m**3
        dL = np.asarray(dL, dtype=float)
        w = dL[:M] - 1j * dL[M:]
        W3 = w[: m**3].reshape(m, m, m)
        WP = w[m**3 :].reshape(2, m, m, m)
        za, zb, zc = z[:, 0], z[:, 1], z[:, 2]
        da = np.einsum("abc,jb,jc->ja", W3, zb, zc)
        db = np.einsum("abc,ja,jc->jb", W3, za, zc)
        dc = np.einsum("abc,ja,jb->jc", W3, za, zb)
        for p, zp, dp in ((0, za, da), (1, zb, db)):
            S = WP[p] + WP[p].transpose(1, 0, 2)
            dp += np.einsum("abc,jb,jc->ja", S, zp, zc)
            dc += np.einsum("abc,ja,jb->jc", WP[p], zp, zp)
        D = np.stack([da, db, dc], axis=1).reshape(len(z), -1)
        return np.concatenate([D.real, -D.imag], axis=1)


def abelian_loss(n: int, calib: Calibration | None = None):
    """The decomposed loss as a ``SeparableLoss`` over ``AbelianFamily(n)``."""
    from .dynamics import SeparableLoss

    Q, b, const = abelian_quadratic_form(n, calib)
    return SeparableLoss.quadratic_form(AbelianFamily(n), Q, b, const, name="abelian")


def abelian_mp_values(ps: ParticleSystem) -> np.ndarray:
    """Real MP coordinates of a particle system via the feature map (mean over particles)."""
    return paired_mean(AbelianFamily(ps.n).values(ps.to_real()), axis=0)


__all__ = [
    "AbelianFamily",
    "AbelianMPVector",
    "Calibration",
    "Residual",
    "TargetAssignment",
    "abelian_loss",
    "abelian_mp_values",
    "abelian_quadratic_form",
    "calibrate",
    "decomposed_loss",
    "decomposition_residual",
    "distance_to_01",
    "ell_csv",
    "ell_terms",
    "eval_mps",
]
