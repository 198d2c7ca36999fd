"""Small numerical kernels: checked matrix product, percentiles, seeded RNG
streams and a central finite-difference gradient used to check backprop."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractViolation

__all__ = [
    "RngStream",
    "as_matrix",
    "matmul",
    "percentile",
    "finite_diff_gradient",
    "relative_error",
]


def as_matrix(values, cols: int | None = None) -> np.ndarray:
    """Return ``values`` as a finite 2-D float64 array (a copy is not forced)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if cols is None else arr.reshape(-1, cols)
    if arr.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise ContractViolation(f"expected {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("matrix contains NaN or Inf")
    return arr


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractViolation("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(
            f"dimension mismatch: {a.shape} x {b.shape}"
        )
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise ContractViolation("matmul produced non-finite values")
    return out


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile, ``p`` given as a fraction in [0, 1].

    The rank is ``p * (n - 1)`` into the sorted values; fractional ranks
    interpolate between the neighbouring order statistics.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if arr.size == 0:
        raise ContractViolation("percentile of an empty array")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("percentile input contains NaN or Inf")
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"p must lie in [0, 1], got {p}")
    rank = p * (arr.size - 1)
    lo = int(np.floor(rank))
    hi = int(np.ceil(rank))
    if lo == hi:
        return float(arr[lo])
    frac = rank - lo
    return float(arr[lo] + (arr[hi] - arr[lo]) * frac)


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ContractViolation("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ContractViolation(f"f is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b, floor: float = 1e-8) -> float:
    """Max-norm relative discrepancy between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


class RngStream:
    """Seeded random stream; the only source of randomness in the toolkit.

    Children are derived from ``(seed, *path)`` so parallel or nested work
    never shares a generator and stays reproducible.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in _path)
        ss = np.random.SeedSequence([self.seed, *self.path])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(index),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
