"""Two-layer quadratic network on one-hot pairs of Z_n elements.

Hidden unit j carries Fourier coefficients z_j of shape (3, n-1): rows are the
roles a, b, c and columns the nonzero frequencies 1..n-1.  The weights are

    w_aj = sum_k z_akj F_k,   w_bj = sum_k z_bkj F_k,   w_cj = sum_k z_ckj conj(F_k)

and the output is o(a1, a2) = (1/q) sum_j w_cj (w_aj[a1] + w_bj[a2])**2.

Gradients are taken with respect to the real and imaginary parts of every
coefficient, laid out per particle as ``[Re z.ravel(), Im z.ravel()]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._numerics import make_rng
from .group_fourier import FourierBasis, GroupSpec

ROLES = ("a", "b", "c")


@dataclass(frozen=True)
class Normalization:
    """Overall factor on the sum over pairs.

    The default (mean over the n^2 pairs) is the value that
    ``potentials.calibrate`` recovers; the basis scale lives on ``FourierBasis``.
    """

    c_norm: float

    @classmethod
    def mean_over_pairs(cls, n: int) -> "Normalization":
        return cls(c_norm=1.0 / n**2)


@dataclass
class ParticleSystem:
    n: int
    coeffs: np.ndarray  # (q, 3, n-1) complex
    seed: int | None = None

    def __post_init__(self):
        GroupSpec(self.n)
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != (3, self.n - 1):
            raise ValueError(f"coeffs must have shape (q, 3, {self.n - 1}), got {c.shape}")
        if c.shape[0] < 1:
            raise ValueError("need at least one particle")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        self.coeffs = c

    @property
    def q(self) -> int:
        return self.coeffs.shape[0]

    @property
    def real_dim(self) -> int:
        return 6 * (self.n - 1)

    @classmethod
    def zeros(cls, n: int, q: int) -> "ParticleSystem":
        return cls(n, np.zeros((q, 3, n - 1), dtype=complex))

    @classmethod
    def random(cls, n: int, q: int, seed: int, scale: float = 1.0, conjugate_symmetric: bool = False) -> "ParticleSystem":
        """i.i.d. complex Gaussian coefficients, real and imaginary parts N(0, scale^2)."""
        rng = make_rng(seed, 11)
        c = scale * (rng.standard_normal((q, 3, n - 1)) + 1j * rng.standard_normal((q, 3, n - 1)))
        ps = cls(n, c, seed=seed)
        return ps.conjugate_symmetrized() if conjugate_symmetric else ps

    # real-pair view -------------------------------------------------------

    def to_real(self) -> np.ndarray:
        flat = self.coeffs.reshape(self.q, -1)
        return np.concatenate([flat.real, flat.imag], axis=1)

    @classmethod
    def from_real(cls, n: int, x: np.ndarray, seed: int | None = None) -> "ParticleSystem":
        x = np.asarray(x, dtype=float)
        half = 3 * (n - 1)
        c = (x[:, :half] + 1j * x[:, half:]).reshape(x.shape[0], 3, n - 1)
        return cls(n, c, seed=seed)

    # conjugate symmetry z_{-k} = conj(z_k) --------------------------------

    def conjugate_symmetrized(self) -> "ParticleSystem":
        """Orthogonal projection onto coefficients that synthesize real weights."""
        c = self.coeffs
        mirror = np.conj(c[:, :, ::-1])  # index k-1 <-> n-k-1, i.e. k <-> n-k
        return ParticleSystem(self.n, 0.5 * (c + mirror), seed=self.seed)

    # serialization ---------------------------------------------------------

    def to_json_dict(self) -> dict:
        """``{n, q, seed, coeffs}``; ``coeffs[j]`` lists [re, im] pairs in role-major order."""
        return {
            "n": self.n,
            "q": self.q,
            "seed": self.seed,
            "coeffs": [[[float(v.real), float(v.imag)] for v in row.reshape(-1)] for row in self.coeffs],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ParticleSystem":
        n, q = int(obj["n"]), int(obj["q"])
        arr = np.asarray(obj["coeffs"], dtype=float)
        if arr.shape != (q, 3 * (n - 1), 2):
            raise ValueError(f"coeffs has shape {arr.shape}, expected {(q, 3 * (n - 1), 2)}")
        c = (arr[..., 0] + 1j * arr[..., 1]).reshape(q, 3, n - 1)
        return cls(n, c, seed=obj.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path) -> "ParticleSystem":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TaskBatch:
    n: int
    pairs: np.ndarray = field(repr=False)  # (P, 2)

    @classmethod
    def all_pairs(cls, n: int) -> "TaskBatch":
        a1, a2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return cls(n, np.stack([a1.ravel(), a2.ravel()], axis=1))

    @property
    def targets(self) -> np.ndarray:
        t = np.zeros((len(self.pairs), self.n))
        t[np.arange(len(self.pairs)), (self.pairs[:, 0] + self.pairs[:, 1]) % self.n] = 1.0
        return t


def _weights(ps: ParticleSystem, basis: FourierBasis):
    if basis.n != ps.n:
        raise ValueError(f"basis order {basis.n} does not match particle system order {ps.n}")
    F = basis.nonzero  # (n, n-1)
    Wa = F @ ps.coeffs[:, 0, :].T  # (n, q)
    Wb = F @ ps.coeffs[:, 1, :].T
    Wc = F.conj() @ ps.coeffs[:, 2, :].T
    return F, Wa, Wb, Wc


def _check_element(n: int, a: int) -> None:
    if not 0 <= a < n:
        raise IndexError(f"group element {a} out of range for Z_{n}")


def forward_complex(ps: ParticleSystem, basis: FourierBasis, a1: int, a2: int) -> np.ndarray:
    _check_element(ps.n, a1)
    _check_element(ps.n, a2)
    _, Wa, Wb, Wc = _weights(ps, basis)
    h = Wa[a1] + Wb[a2]
    return (Wc @ h**2) / ps.q


def forward(ps: ParticleSystem, basis: FourierBasis, a1: int, a2: int) -> np.ndarray:
    """Real part of the network output at (a1, a2).

    The imaginary part vanishes (to rounding) only for conjugate-symmetric
    coefficients; the loss uses the complex output, see ``direct_loss``.
    """
    return forward_complex(ps, basis, a1, a2).real


def _residuals(ps: ParticleSystem, basis: FourierBasis):
    n, q = ps.n, ps.q
    F, Wa, Wb, Wc = _weights(ps, basis)
    h = Wa[:, None, :] + Wb[None, :, :]  # (n, n, q) indexed [a1, a2, j]
    o = np.einsum("gj,abj->abg", Wc, h**2) / q
    R = o / (2 * n)
    idx = np.arange(n)
    R[idx[:, None], idx[None, :], (idx[:, None] + idx[None, :]) % n] -= 1.0
    R -= R.mean(axis=2, keepdims=True)
    return F, Wc, h, R


def direct_loss(ps: ParticleSystem, basis: FourierBasis, norm: Normalization | None = None) -> float:
    """c_norm * sum over all pairs of || P_perp (o/(2n) - e_{a1+a2}) ||^2 with complex o."""
    norm = norm or Normalization.mean_over_pairs(ps.n)
    _, _, _, R = _residuals(ps, basis)
    return float(norm.c_norm * np.sum(R.real**2 + R.imag**2))


def loss_gradient(ps: ParticleSystem, basis: FourierBasis, norm: Normalization | None = None) -> np.ndarray:
    """Gradient of ``direct_loss`` w.r.t. the real-pair coordinates, shape (q, 6(n-1))."""
    norm = norm or Normalization.mean_over_pairs(ps.n)
    n, q = ps.n, ps.q
    F, Wc, h, R = _residuals(ps, basis)
    # dH = 2 c Re sum conj(R) . dR and P_perp R = R, so the adjoint of o is conj(R)/(2n)
    V = np.conj(R) / (2 * n)
    T = np.einsum("abg,gj->abj", V, Wc)
    Gc = np.einsum("abj,abg,gk->jk", h**2, V, F.conj()) / q
    Th = T * h
    Ga = 2.0 * np.einsum("abj,ak->jk", Th, F) / q
    Gb = 2.0 * np.einsum("abj,bk->jk", Th, F) / q
    G = np.stack([Ga, Gb, Gc], axis=1).reshape(q, -1)  # holomorphic derivative dH/dz (up to 2c)
    return np.concatenate([2 * norm.c_norm * G.real, -2 * norm.c_norm * G.imag], axis=1)
