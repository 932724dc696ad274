"""Small numerical helpers shared across modules."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream...)``.

    Distinct stream tuples give independent Philox streams derived from the
    same root seed, so shards and modules never share draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def paired_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sum along ``axis`` by first folding the second half onto the first.

    The order is fixed, and for a particle set stored as ``[Z; -Z]`` the
    contributions of odd functions cancel elementwise before any rounding,
    so their sums come out as exact zeros.
    """
    v = np.moveaxis(np.asarray(values), axis, 0)
    n = v.shape[0]
    if n >= 2 and n % 2 == 0:
        h = n // 2
        return np.sum(v[:h] + v[h:], axis=0)
    return np.sum(v, axis=0)


def paired_mean(values: np.ndarray, axis: int = 0) -> np.ndarray:
    v = np.asarray(values)
    return paired_sum(v, axis=axis) / v.shape[axis]


def mean_and_stderr(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of the mean along ``axis``."""
    v = np.asarray(values)
    n = v.shape[axis]
    mean = paired_mean(v, axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean, dtype=float)
    dev = v - np.expand_dims(mean, axis)
    var = paired_sum(np.abs(dev) ** 2, axis=axis) / (n - 1)
    return mean, np.sqrt(var / n)


def central_difference(func, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a real array."""
    x = np.array(x, dtype=float)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = func(x)
        flat[i] = old - h
        fm = func(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(approx: np.ndarray, exact: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Componentwise relative error; entries with ``|exact| < floor`` are compared absolutely."""
    approx = np.asarray(approx)
    exact = np.asarray(exact)
    diff = np.abs(approx - exact)
    scale = np.abs(exact)
    return np.where(scale < floor, diff, diff / np.where(scale < floor, 1.0, scale))


def odd_multi_indices(d: int, max_degree: int) -> list[tuple[int, ...]]:
    """All exponent vectors in ``d`` variables with odd total degree <= ``max_degree``."""
    out: list[tuple[int, ...]] = []

    def rec(prefix: list[int], remaining: int, pos: int) -> None:
        if pos == d:
            deg = sum(prefix)
            if deg % 2 == 1:
                out.append(tuple(prefix))
            return
        for e in range(remaining + 1):
            prefix.append(e)
            rec(prefix, remaining - e, pos + 1)
            prefix.pop()

    rec([], max_degree, 0)
    return out
