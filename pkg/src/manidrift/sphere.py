"""Unit-sphere primitives and the residual fusion map.

Vectors are plain float64 numpy arrays. Single-vector functions take 1-D
arrays; the ``*_rows`` variants operate on stacked rows and dispatch to the
compiled kernels.
"""

from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, MarginViolation, NearOpposition, NotNormalized, ZeroNorm

ZERO_NORM_THRESHOLD = 1e-12
DEFAULT_KAPPA = 1e-6
UNIT_TOL = 1e-9


def _vec(v):
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {a.shape}")
    return a


def _same_dim(u, v):
    if u.shape != v.shape:
        raise DimensionMismatch(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")


def is_unit(v, tol=UNIT_TOL):
    v = _vec(v)
    return bool(np.all(np.isfinite(v)) and abs(np.linalg.norm(v) - 1.0) <= tol)


def check_unit(v, tol=UNIT_TOL):
    """Return ``v`` as float64 if it is a finite unit vector, else raise NotNormalized."""
    v = _vec(v)
    if not is_unit(v, tol):
        raise NotNormalized(f"vector norm {np.linalg.norm(v)!r} is not 1 within {tol}")
    return v


def normalize(v, threshold=ZERO_NORM_THRESHOLD):
    v = _vec(v)
    n = np.linalg.norm(v)
    if not n > threshold:
        raise ZeroNorm(f"cannot normalize vector with norm {n!r}")
    return v / n


def normalize_rows(X, threshold=ZERO_NORM_THRESHOLD):
    """Normalize each row of ``X``; raises ZeroNorm naming the first offending row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {X.shape}")
    Y, norms = _kernels.normalize_rows(X)
    bad = np.flatnonzero(~(norms > threshold))
    if bad.size:
        raise ZeroNorm(f"row {bad[0]} has norm {norms[bad[0]]!r}")
    return Y


def cosine(u, v):
    """Inner product of two unit vectors, clamped to [-1, 1]."""
    u, v = _vec(u), _vec(v)
    _same_dim(u, v)
    return float(np.clip(u @ v, -1.0, 1.0))


def sphere_distance_sq(u, v):
    """Squared chord length between unit vectors, ``2 (1 - <u, v>)``."""
    return 2.0 * (1.0 - cosine(u, v))


def fuse(frozen, prompt, kappa=DEFAULT_KAPPA):
    """Residual fusion ``(frozen + prompt) / ||frozen + prompt||``.

    Raises NearOpposition when ``||frozen + prompt||^2 < 2 kappa``.
    """
    frozen, prompt = _vec(frozen), _vec(prompt)
    _same_dim(frozen, prompt)
    s = frozen + prompt
    sq = float(s @ s)
    if not sq >= 2.0 * kappa:
        raise NearOpposition(f"||frozen + prompt||^2 = {sq!r} below 2*kappa = {2 * kappa!r}")
    return s / np.sqrt(sq)


def fuse_rows(frozen, prompt, kappa=DEFAULT_KAPPA, return_norms=False):
    """Row-wise :func:`fuse`. With ``return_norms`` also returns ``||frozen + prompt||`` per row."""
    frozen = np.asarray(frozen, dtype=np.float64)
    prompt = np.asarray(prompt, dtype=np.float64)
    if frozen.shape != prompt.shape or frozen.ndim != 2:
        raise DimensionMismatch(f"shape mismatch: {frozen.shape} vs {prompt.shape}")
    F, sq = _kernels.fuse_rows(frozen, prompt)
    bad = np.flatnonzero(~(sq >= 2.0 * kappa))
    if bad.size:
        i = int(bad[0])
        raise NearOpposition(
            f"row {i}: ||frozen + prompt||^2 = {sq[i]!r} below 2*kappa = {2 * kappa!r}", row=i
        )
    if return_norms:
        return F, np.sqrt(sq)
    return F


def contraction_gap(frozen, prompt, kappa=DEFAULT_KAPPA):
    """``0.5 ||prompt - frozen||^2 - ||fuse - frozen||^2``; never negative beyond round-off."""
    w = fuse(frozen, prompt, kappa)
    frozen, prompt = _vec(frozen), _vec(prompt)
    return float(0.5 * np.sum((prompt - frozen) ** 2) - np.sum((w - frozen) ** 2))


def contraction_gaps(frozen, prompt, kappa=DEFAULT_KAPPA):
    F = fuse_rows(frozen, prompt, kappa)
    return _kernels.pair_gaps(frozen, prompt, F)


def fused_alignment(gamma):
    """Closed-form ``<fuse(phi, psi), phi>`` for ``gamma = <phi, psi>``."""
    return np.sqrt((1.0 + np.asarray(gamma)) / 2.0)


class LipschitzCheck(NamedTuple):
    lhs: float
    bound: float


def fusion_lipschitz_check(frozen, prompt_a, prompt_b, margin):
    """Evaluate both sides of the ``2/margin`` Lipschitz bound of the fusion map.

    Requires ``||frozen + prompt_x|| >= margin`` for both prompts.
    """
    frozen, prompt_a, prompt_b = _vec(frozen), _vec(prompt_a), _vec(prompt_b)
    _same_dim(frozen, prompt_a)
    _same_dim(frozen, prompt_b)
    if not margin > 0:
        raise MarginViolation(f"margin must be positive, got {margin!r}")
    for name, p in (("prompt_a", prompt_a), ("prompt_b", prompt_b)):
        n = np.linalg.norm(frozen + p)
        if n < margin:
            raise MarginViolation(f"||frozen + {name}|| = {n!r} below margin {margin!r}")
    # margin > 0 and the norms clear it, so fuse cannot fail here
    wa = fuse(frozen, prompt_a, kappa=0.0)
    wb = fuse(frozen, prompt_b, kappa=0.0)
    lhs = float(np.linalg.norm(wa - wb))
    bound = float(2.0 / margin * np.linalg.norm(prompt_a - prompt_b))
    return LipschitzCheck(lhs, bound)
