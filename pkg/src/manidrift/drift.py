"""Manifold drift: off-subspace energy of a feature cloud relative to the
principal subspace of a pretrained cloud."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    DegenerateCloud,
    DimensionMismatch,
    NonOrthonormalBasis,
    NotNormalized,
    RankTooLarge,
    ShapeMismatch,
)

EPS_NUM = 1e-12
DEFAULT_RANK = 64
FEATURE_UNIT_TOL = 1e-6
ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class FeatureMatrix:
    """``N x d`` row features; ``normalized`` asserts every row is unit-norm."""

    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ShapeMismatch(f"feature matrix must be 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.normalized and rows.shape[0]:
            norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
            bad = np.flatnonzero(np.abs(norms - 1.0) > FEATURE_UNIT_TOL)
            if bad.size:
                raise NotNormalized(f"row {bad[0]} has norm {norms[bad[0]]!r}")
        object.__setattr__(self, "rows", rows)

    @property
    def shape(self):
        return self.rows.shape


def _rows(X):
    if isinstance(X, FeatureMatrix):
        return X.rows
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class PrincipalSubspace:
    centroid: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    # full spectrum of the fitting cloud, used for tail-energy checks
    spectrum: np.ndarray

    @property
    def rank(self):
        return self.basis.shape[1]

    @property
    def dim(self):
        return self.basis.shape[0]

    def projector(self):
        """Dense ``V V^T``; only for inspection, projections use the factored form."""
        return self.basis @ self.basis.T

    def project(self, X):
        Xc = _rows(X) - self.centroid
        return (Xc @ self.basis) @ self.basis.T

    def tail_energy_fraction(self):
        s2 = self.spectrum**2
        return float(s2[self.rank :].sum() / s2.sum())


@dataclass(frozen=True)
class DriftReport:
    ratio_pretrained: float
    ratio_tuned: float
    delta: float
    rank: int
    n_samples: int


def max_rank(n, d):
    return min(n - 1, d) if n > 1 else min(n, d)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _right_singular(Zc):
    """All right singular vectors and singular values of ``Zc`` via the smaller Gram matrix.

    Returns ``(V, s)`` with ``V`` of shape ``(d, min(N, d))`` sorted by
    descending singular value (stable on index for ties).
    """
    n, d = Zc.shape
    if n >= d:
        evals, evecs = np.linalg.eigh(Zc.T @ Zc)
        order = np.argsort(-evals, kind="stable")
        evals = np.clip(evals[order], 0.0, None)
        return evecs[:, order], np.sqrt(evals)
    evals, U = np.linalg.eigh(Zc @ Zc.T)
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    U = U[:, order]
    s = np.sqrt(evals)
    tol = max(n, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    good = s > tol
    V = np.zeros((d, n))
    V[:, good] = (Zc.T @ U[:, good]) / s[good]
    # re-orthonormalize the well-defined columns, complete the rest deterministically
    k = int(good.sum())
    if k:
        Q, R = np.linalg.qr(V[:, :k])
        V[:, :k] = Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    if k < n:
        M = np.hstack([V[:, :k], np.eye(d)])
        Q, _ = np.linalg.qr(M)
        V[:, k:] = Q[:, k:n]
    return V, s


def fit_subspace(Z, rank=DEFAULT_RANK) -> PrincipalSubspace:
    """Centroid plus top-``rank`` principal directions of the centered cloud ``Z``."""
    Z = _rows(Z)
    n, d = Z.shape
    if n < 1:
        raise DegenerateCloud("cannot fit a subspace to an empty cloud")
    limit = max_rank(n, d)
    if not 1 <= rank <= limit:
        raise RankTooLarge(f"rank {rank} outside [1, {limit}] for a {n}x{d} cloud", rank=rank)
    mu = Z.mean(axis=0)
    Zc = Z - mu
    scale = np.abs(Z).max() if Z.size else 0.0
    if not np.abs(Zc).max() > 64 * np.finfo(float).eps * max(scale, 1.0):
        raise DegenerateCloud("centered cloud is numerically zero (all rows equal)")
    V, s = _right_singular(Zc)
    basis = _fix_signs(V[:, :rank].copy())
    return PrincipalSubspace(mu, basis, s[:rank].copy(), s)


def off_manifold_ratio(X, subspace: PrincipalSubspace) -> float:
    """Fraction of energy of ``X - centroid`` outside the subspace, stabilized by ``EPS_NUM``."""
    X = _rows(X)
    if X.shape[1] != subspace.dim:
        raise DimensionMismatch(f"features have dimension {X.shape[1]}, subspace has {subspace.dim}")
    resid, total = _kernels.residual_energy(X, subspace.centroid, subspace.basis)
    return float(resid.sum() / (total.sum() + EPS_NUM))


def manifold_drift(Z, H, rank=DEFAULT_RANK, subspace=None) -> DriftReport:
    Z, H = _rows(Z), _rows(H)
    if Z.shape != H.shape:
        raise ShapeMismatch(f"pretrained {Z.shape} vs tuned {H.shape}")
    sub = subspace if subspace is not None else fit_subspace(Z, rank)
    rz = off_manifold_ratio(Z, sub)
    rh = off_manifold_ratio(H, sub)
    return DriftReport(rz, rh, rh - rz, sub.rank, Z.shape[0])


def drift_sensitivity(Z, H, ranks):
    Z, H = _rows(Z), _rows(H)
    limit = max_rank(*Z.shape)
    for k in ranks:
        if not 1 <= k <= limit:
            raise RankTooLarge(f"rank {k} outside [1, {limit}] for a {Z.shape[0]}x{Z.shape[1]} cloud", rank=k)
    return [manifold_drift(Z, H, k) for k in ranks]


class ShiftParts(NamedTuple):
    in_subspace: np.ndarray
    complement: np.ndarray


def decompose_shift(delta, basis, tol=ORTHONORMAL_TOL) -> ShiftParts:
    """Split ``delta`` into its projection onto ``span(basis)`` and the orthogonal remainder."""
    delta = np.asarray(delta, dtype=np.float64)
    B = np.atleast_2d(np.asarray(basis, dtype=np.float64))
    if B.shape[0] != delta.shape[-1]:
        raise DimensionMismatch(f"basis has {B.shape[0]} rows, shift has dimension {delta.shape[-1]}")
    if np.abs(B.T @ B - np.eye(B.shape[1])).max() > tol:
        raise NonOrthonormalBasis("basis columns are not orthonormal")
    inside = (delta @ B) @ B.T
    return ShiftParts(inside, delta - inside)
