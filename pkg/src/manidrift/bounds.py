"""Closed-form evaluators for the consistency-localized generalization bounds."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRegime, EmptyClass, InvalidParameter, LConOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class BoundParams:
    tau: float
    num_classes: int
    num_samples: int
    prompt_dim: int = 1
    param_radius: float = 1.0
    lipschitz: float = 1.0
    confidence: float = 0.05
    epsilon: float = 0.0

    def __post_init__(self):
        checks = (
            (self.tau > 0, "tau must be positive"),
            (self.num_classes >= 1, "num_classes must be >= 1"),
            (self.num_samples >= 1, "num_samples must be >= 1"),
            (self.prompt_dim >= 1, "prompt_dim must be >= 1"),
            (self.param_radius > 0, "param_radius must be positive"),
            (self.lipschitz > 0, "lipschitz must be positive"),
            (0 < self.confidence < 1, "confidence must lie in (0, 1)"),
            (self.epsilon >= 0, "epsilon must be non-negative"),
        )
        for ok, msg in checks:
            if not ok:
                raise InvalidParameter(msg)

    @property
    def loss_bound(self):
        return loss_bound_B(self.num_classes, self.tau)

    @property
    def peeling_depth(self):
        return peeling_depth(self.num_samples)


def loss_bound_B(num_classes, tau):
    """Range of the cross-entropy on unit-feature logits: ``log C + 2 tau``."""
    if num_classes < 1 or not tau > 0:
        raise InvalidParameter("need num_classes >= 1 and tau > 0")
    return math.log(num_classes) + 2.0 * tau


def logit_perturbation_bound(tau, num_classes, l_con):
    if not tau > 0 or num_classes < 0 or l_con < 0:
        raise InvalidParameter("need tau > 0 and non-negative num_classes, l_con")
    return 4.0 * tau**2 * num_classes * l_con


def empirical_logit_perturbation(fused_vis, frozen_vis, fused_txt, prototypes, tau):
    """Mean squared norm of (adapted logits - frozen-reference logits) over the batch."""
    Fv = np.asarray(fused_vis, dtype=np.float64)
    Z = np.asarray(frozen_vis, dtype=np.float64)
    Ft = np.asarray(fused_txt, dtype=np.float64)
    W = getattr(prototypes, "prototypes", prototypes)
    W = np.asarray(W, dtype=np.float64)
    if Fv.shape != Z.shape or Ft.shape != W.shape or Fv.shape[1] != Ft.shape[1]:
        raise ShapeMismatch(f"inconsistent shapes {Fv.shape}, {Z.shape}, {Ft.shape}, {W.shape}")
    dL = tau * (Fv @ Ft.T) - tau * (Z @ W.T)
    return float(np.mean(np.einsum("ij,ij->i", dL, dL)))


def _complexity(tau, num_classes, num_samples, prompt_dim, radius_lipschitz, spread):
    """``(12 chi / sqrt N) sqrt(D log(3 e L R / chi))`` with ``chi = 2 tau sqrt(spread)``."""
    chi = 2.0 * tau * math.sqrt(spread)
    arg = 3.0 * math.e * radius_lipschitz / chi
    if not arg > 1.0:
        raise DegenerateRegime(f"log argument {arg:.6g} <= 1; the entropy-integral bound does not apply")
    return 12.0 * chi / math.sqrt(num_samples) * math.sqrt(prompt_dim * math.log(arg))


def rademacher_bound(params: BoundParams):
    """Upper bound on the empirical Rademacher complexity of the localized difference class.

    Zero at ``epsilon == 0`` by convention (the class collapses to a point).
    """
    if params.epsilon == 0:
        return 0.0
    return _complexity(
        params.tau,
        params.num_classes,
        params.num_samples,
        params.prompt_dim,
        params.lipschitz * params.param_radius,
        2.0 * params.num_classes * params.epsilon,
    )


def deviation_term(params: BoundParams, log_numerator=4.0):
    B = params.loss_bound
    return 4.0 * B * math.sqrt(math.log(log_numerator / params.confidence) / (2.0 * params.num_samples))


class BoundBreakdown(NamedTuple):
    B: float
    rademacher: float
    deviation: float
    bound: float
    H: int = None


def generalization_bound(empirical_risk, params: BoundParams, breakdown=False):
    if empirical_risk < 0:
        raise InvalidParameter("empirical risk must be non-negative")
    rad = rademacher_bound(params)
    dev = deviation_term(params)
    total = empirical_risk + 2.0 * rad + dev
    if breakdown:
        return BoundBreakdown(params.loss_bound, rad, dev, total)
    return total


def peeling_depth(num_samples):
    """``ceil(log2 N)``, computed exactly on integers."""
    if num_samples < 1:
        raise InvalidParameter("num_samples must be >= 1")
    return (int(num_samples) - 1).bit_length()


def peeling_bound(empirical_risk, l_con, params: BoundParams, breakdown=False):
    """Adaptive bound over all dyadic consistency levels with ``0 < l_con <= 1``."""
    if not 0 < l_con <= 1:
        raise LConOutOfRange(f"l_con must lie in (0, 1], got {l_con!r}")
    if empirical_risk < 0:
        raise InvalidParameter("empirical risk must be non-negative")
    H = peeling_depth(params.num_samples)
    rad = _complexity(
        params.tau,
        params.num_classes,
        params.num_samples,
        params.prompt_dim,
        params.lipschitz * params.param_radius,
        4.0 * params.num_classes * l_con,
    )
    dev = deviation_term(params, log_numerator=4.0 * (H + 1))
    total = empirical_risk + rad + dev
    if breakdown:
        return BoundBreakdown(params.loss_bound, rad, dev, total, H)
    return total


@dataclass(frozen=True)
class AnchorStats:
    per_class_distance: np.ndarray
    nearest_index: np.ndarray
    zeta_max: float
    eps_proj: float


def anchor_stats(anchors, candidates) -> AnchorStats:
    """Distance from each class anchor to its nearest realizable candidate feature."""
    A = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if len(candidates) != A.shape[0]:
        raise ShapeMismatch(f"{A.shape[0]} anchors but {len(candidates)} candidate sets")
    dist = np.empty(A.shape[0])
    idx = np.empty(A.shape[0], dtype=np.int64)
    for c, cand in enumerate(candidates):
        M = np.atleast_2d(np.asarray(cand, dtype=np.float64))
        if M.size == 0:
            raise EmptyClass(f"class {c} has no candidate features")
        if M.shape[1] != A.shape[1]:
            raise ShapeMismatch(f"class {c} candidates have dimension {M.shape[1]}")
        dd = np.linalg.norm(M - A[c], axis=1)
        idx[c] = int(np.argmin(dd))  # first index on ties
        dist[c] = dd[idx[c]]
    return AnchorStats(dist, idx, float(dist.max()), float(np.mean(dist**2)))


def non_opposition_margins(frozen, prompt):
    """Smallest ``1 + <z_i, h_i>`` over paired rows; positive certifies fusability."""
    Z = np.asarray(frozen, dtype=np.float64)
    H = np.asarray(prompt, dtype=np.float64)
    if Z.shape != H.shape or Z.ndim != 2:
        raise ShapeMismatch(f"frozen {Z.shape} vs prompt {H.shape}")
    cos = np.clip(np.einsum("ij,ij->i", Z, H), -1.0, 1.0)
    return float(np.min(1.0 + cos))
