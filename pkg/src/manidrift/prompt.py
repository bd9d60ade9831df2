"""Learnable prompt branch: a normalized affine perturbation of frozen features.

Stands in for deep prompting of a frozen encoder. For a frozen unit feature
``z`` the prompt-branch feature is ``normalize(z + M z + b)``.
"""

from dataclasses import dataclass

import numpy as np

from . import sphere
from .errors import DimensionMismatch, NonFinite


@dataclass(frozen=True)
class PromptParams:
    vis_map: np.ndarray
    vis_bias: np.ndarray
    txt_map: np.ndarray
    txt_bias: np.ndarray

    def __post_init__(self):
        d = self.vis_bias.shape[0]
        for name in ("vis_map", "txt_map"):
            if getattr(self, name).shape != (d, d):
                raise DimensionMismatch(f"{name} must be {d}x{d}, got {getattr(self, name).shape}")
        if self.txt_bias.shape != (d,):
            raise DimensionMismatch(f"txt_bias must have length {d}")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise NonFinite("prompt parameters contain non-finite entries")

    @property
    def dim(self):
        return self.vis_bias.shape[0]

    def arrays(self):
        return (self.vis_map, self.vis_bias, self.txt_map, self.txt_bias)

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros((d, d)), np.zeros(d), np.zeros((d, d)), np.zeros(d))

    @classmethod
    def random(cls, d, std, rng):
        return cls(
            rng.normal(0.0, std, (d, d)),
            rng.normal(0.0, std, d),
            rng.normal(0.0, std, (d, d)),
            rng.normal(0.0, std, d),
        )

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec, d):
        vec = np.asarray(vec, dtype=np.float64)
        dd = d * d
        return cls(
            vec[:dd].reshape(d, d).copy(),
            vec[dd : dd + d].copy(),
            vec[dd + d : 2 * dd + d].reshape(d, d).copy(),
            vec[2 * dd + d :].copy(),
        )

    def axpy(self, alpha, other):
        """Return ``self + alpha * other``."""
        return PromptParams(*(a + alpha * b for a, b in zip(self.arrays(), other.arrays())))


def prompt_branch(frozen, map_, bias):
    """``normalize(frozen + map_ @ frozen + bias)`` for a single feature."""
    frozen = np.asarray(frozen, dtype=np.float64)
    return sphere.normalize(frozen + map_ @ frozen + bias)


def prompt_rows(frozen, map_, bias):
    """Row-wise prompt branch. Returns ``(h, pre_norms)`` where ``pre_norms`` are ``||z + Mz + b||``."""
    frozen = np.asarray(frozen, dtype=np.float64)
    U = frozen + frozen @ map_.T + bias
    norms = np.sqrt(np.einsum("ij,ij->i", U, U))
    H = sphere.normalize_rows(U)
    return H, norms
