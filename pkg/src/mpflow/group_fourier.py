"""Characters and the scaled Fourier basis of the cyclic group Z_n.

Only cyclic groups are built; products of cyclic groups would slot in as a
second ``GroupSpec`` flavour with a multi-axis frequency index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class GroupSpec:
    """Z_n with addition mod n."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"group order must be an integer >= 2, got {self.n!r}")

    def op(self, g: int, h: int) -> int:
        return (g + h) % self.n

    @property
    def nonzero_frequencies(self) -> np.ndarray:
        return np.arange(1, self.n)


def character(spec: GroupSpec, k: int, g: int) -> complex:
    """exp(2 pi i k g / n)."""
    n = spec.n
    if not (0 <= k < n and 0 <= g < n):
        raise ValueError(f"indices out of range for Z_{n}: k={k}, g={g}")
    # reduce the phase first so large k*g keep full precision
    return complex(np.exp(2j * np.pi * ((k * g) % n) / n))


@dataclass(frozen=True)
class FourierBasis:
    """Columns F_k(g) = scale * exp(2 pi i k g / n) for k = 0..n-1."""

    n: int
    scale: float = 1.0

    def __post_init__(self):
        GroupSpec(self.n)
        if not self.scale > 0:
            raise ValueError("basis scale must be positive")

    @cached_property
    def matrix(self) -> np.ndarray:
        """(n, n) array whose column k is F_k."""
        g = np.arange(self.n)
        phase = np.outer(g, g) % self.n
        m = self.scale * np.exp(2j * np.pi * phase / self.n)
        m.setflags(write=False)
        return m

    @property
    def nonzero(self) -> np.ndarray:
        """(n, n-1) array of the columns F_1..F_{n-1}."""
        return self.matrix[:, 1:]

    def column(self, k: int) -> np.ndarray:
        return self.matrix[:, k]


def synth_weights(basis: FourierBasis, coeffs) -> np.ndarray:
    """w = sum_{k != 0} coeffs[k-1] F_k."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape[-1] != basis.n - 1:
        raise ValueError(f"expected {basis.n - 1} coefficients (one per nonzero frequency), got {c.shape[-1]}")
    return c @ basis.nonzero.T


def analyze_weights(basis: FourierBasis, w) -> np.ndarray:
    """Coefficients c_0..c_{n-1} with w = sum_k c_k F_k."""
    w = np.asarray(w, dtype=complex)
    # columns are orthogonal with squared norm scale^2 n
    return (w @ basis.matrix.conj()) / (basis.scale**2 * basis.n)
