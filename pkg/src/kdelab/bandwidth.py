"""Symmetric positive-definite bandwidth matrices and their diagnostics.

A bandwidth is kept together with its cached spectral data (determinant,
inverse, eigenvalues, operator norm).  Matrices are small (d <= 10), so the
eigendecomposition is done by a cyclic Jacobi sweep, which is exact for
symmetric input and has no dependence on LAPACK threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric

SYMMETRY_RTOL = 1e-12
EIGENVALUE_FLOOR = 1e-14
JACOBI_OFFDIAG_TOL = 1e-13
MAX_DIM = 10


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_OFFDIAG_TOL, max_sweeps: int = 64):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with columns of the second array the
    eigenvectors, unsorted.  Iterates full sweeps until the off-diagonal
    Frobenius norm falls below ``tol`` times the matrix scale.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(float(np.max(np.abs(a))), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # classic 2x2 rotation angle, stable form
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(1.0 + theta * theta)
                )
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = 0.0
                a[q, p] = 0.0
                v = v @ rot
    return np.diag(a).copy(), v


@dataclass(frozen=True)
class BandwidthMatrix:
    """An SPD bandwidth with cached determinant, inverse and spectrum.

    Immutable; safe to share across worker threads.
    """

    dim: int
    entries: np.ndarray
    det: float
    inverse: np.ndarray
    eigenvalues: np.ndarray  # sorted descending, all > 0
    eigenvectors: np.ndarray  # columns, matching eigenvalue order
    op_norm: float = field(default=0.0)

    def apply(self, v) -> np.ndarray:
        """Matrix-vector product h v."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"vector of length {v.shape[-1]} against dim {self.dim}"
            )
        return v @ self.entries.T

    def apply_inverse(self, v) -> np.ndarray:
        """Matrix-vector product h^-1 v."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"vector of length {v.shape[-1]} against dim {self.dim}"
            )
        return v @ self.inverse.T

    @property
    def top_eigenvector(self) -> np.ndarray:
        return self.eigenvectors[:, 0].copy()

    def to_json(self) -> list:
        return [[float(x) for x in row] for row in self.entries]


def make_bandwidth(entries) -> BandwidthMatrix:
    """Validate and decompose a d x d SPD matrix.

    Raises NotSymmetric when the asymmetry exceeds 1e-12 relative to the
    largest entry, NotPositiveDefinite when an eigenvalue is at or below
    the 1e-14 floor.  Input is symmetrized before decomposition.
    """
    a = np.array(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    if d < 1 or d > MAX_DIM:
        raise DimensionMismatch(f"dimension must be in [1, {MAX_DIM}], got {d}")
    if not np.all(np.isfinite(a)):
        raise NotSymmetric("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"max asymmetric entry {asym:.3e} exceeds tolerance")
    a = 0.5 * (a + a.T)

    eigs, vecs = jacobi_eigh(a)
    order = np.argsort(eigs)[::-1]
    eigs = eigs[order]
    vecs = vecs[:, order]
    if eigs[-1] <= EIGENVALUE_FLOOR:
        raise NotPositiveDefinite(f"smallest eigenvalue {eigs[-1]:.3e} below floor")

    det = float(np.prod(eigs))
    inverse = (vecs / eigs) @ vecs.T
    for arr in (a, inverse, eigs, vecs):
        arr.setflags(write=False)
    return BandwidthMatrix(
        dim=d,
        entries=a,
        det=det,
        inverse=inverse,
        eigenvalues=eigs,
        eigenvectors=vecs,
        op_norm=float(eigs[0]),
    )


def identity(d: int) -> BandwidthMatrix:
    return make_bandwidth(np.eye(d))


def scalar(value: float, d: int) -> BandwidthMatrix:
    return make_bandwidth(value * np.eye(d))


def diagonal(values) -> BandwidthMatrix:
    return make_bandwidth(np.diag(np.asarray(values, dtype=float)))


def balance_ratio(h: BandwidthMatrix) -> float:
    """||h||^d / |h|, always >= 1; bounded iff the eigenvalues are balanced.

    Computed as a product of eigenvalue ratios, which is exactly 1 for
    scalar matrices and does not over/underflow when ||h||^d would.
    """
    return float(np.prod(h.op_norm / h.eigenvalues))


def hadamard_ratio(h: BandwidthMatrix) -> float:
    """|h| / ||h||^d, always <= 1 for SPD matrices."""
    return float(np.prod(h.eigenvalues / h.op_norm))
