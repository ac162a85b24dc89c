"""Proper orthogonal decomposition of snapshot matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReducedBasis",
    "CoefficientTable",
    "DegenerateDataError",
    "build_basis",
    "energy_rank",
    "project",
    "reconstruct",
    "fix_signs",
]


class DegenerateDataError(ValueError):
    """Snapshot data carries no energy."""


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal POD basis.

    Attributes
    ----------
    V : ndarray, shape (N_h, N)
    singular_values : ndarray
        Full spectrum of the snapshot matrix, non-increasing.
    tolerance : float or None
        Energy tolerance used to pick N, or None if N was fixed.
    """

    V: np.ndarray
    singular_values: np.ndarray
    tolerance: float | None = None

    @property
    def N(self):
        return self.V.shape[1]

    @property
    def n_dofs(self):
        return self.V.shape[0]

    def tail_energy(self):
        """sqrt(sum of squared discarded singular values)."""
        return float(np.sqrt(np.sum(self.singular_values[self.N:] ** 2)))


@dataclass(frozen=True)
class CoefficientTable:
    """Reduced coefficients of a trajectory set.

    ``q[:, m * n_steps + n]`` holds the coefficients of sample ``m`` at
    step ``n`` (all steps of sample 0 first, then sample 1, ...).
    """

    q: np.ndarray
    n_steps: int
    n_samples: int

    def __post_init__(self):
        if self.q.shape[1] != self.n_steps * self.n_samples:
            raise ValueError("column count must equal n_steps * n_samples")

    def column(self, step, sample):
        return sample * self.n_steps + step

    def matrix(self, ell):
        """Coefficient ``ell`` as an (n_steps, n_samples) matrix."""
        return self.q[ell].reshape(self.n_samples, self.n_steps).T


def energy_rank(singular_values, tol):
    """Smallest N with sum_{i>N} s_i^2 / sum_i s_i^2 <= tol^2."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total <= 0.0:
        raise DegenerateDataError("all singular values are zero")
    # tail[k] = energy discarded when keeping k modes
    tail = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]]) / total
    ok = np.flatnonzero(tail <= tol**2)
    return max(int(ok[0]), 1)


def fix_signs(U):
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, signs


def build_basis(snapshots, tol=None, n_modes=None):
    """POD basis from a snapshot matrix (one snapshot per column).

    Exactly one of ``tol`` (energy tolerance) and ``n_modes`` must be given.
    """
    if (tol is None) == (n_modes is None):
        raise ValueError("give exactly one of tol and n_modes")
    S = np.asarray(snapshots, dtype=float)
    if not np.any(S):
        raise DegenerateDataError("snapshot matrix is identically zero")
    U, s, _ = np.linalg.svd(S, full_matrices=False)
    if tol is not None:
        N = energy_rank(s, tol)
    else:
        if not 1 <= n_modes <= len(s):
            raise ValueError(f"n_modes must lie in 1..{len(s)}")
        N = int(n_modes)
    V, _ = fix_signs(U[:, :N])
    return ReducedBasis(np.ascontiguousarray(V), s, tol)


def project(basis, data, n_steps=None):
    """Reduced coefficients V^T data.

    With ``n_steps`` given, returns a :class:`CoefficientTable` for data
    laid out sample-major; otherwise the raw coefficient matrix.
    """
    data = np.asarray(data, dtype=float)
    if data.shape[0] != basis.n_dofs:
        raise ValueError(f"data has {data.shape[0]} rows, basis has {basis.n_dofs}")
    q = basis.V.T @ data
    if n_steps is None:
        return q
    return CoefficientTable(q, n_steps, q.shape[1] // n_steps)


def reconstruct(basis, q):
    """Field V q."""
    q = np.asarray(q, dtype=float)
    if q.shape[0] != basis.N:
        raise ValueError(f"q has {q.shape[0]} rows, basis has {basis.N} modes")
    return basis.V @ q
