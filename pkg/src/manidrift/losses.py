"""Classification and cosine-consistency objectives with analytic gradients."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels, sphere
from .errors import EmptyClass, LabelOutOfRange, NotNormalized, ShapeMismatch, ZeroNorm
from .prompt import PromptParams, prompt_rows

ROW_UNIT_TOL = 1e-6


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    img: float
    txt: float
    con: float
    total: float
    lam: float

    def as_row(self):
        return (self.ce, self.img, self.txt, self.con, self.total)


@dataclass(frozen=True)
class PrototypeBank:
    """Per-class description features and their normalized-sum prototypes.

    ``features[c]`` is an ``(n_c, d)`` array; ``prototypes`` is ``(C, d)``.
    ``provenance`` optionally names the source of each class's descriptions.
    """

    features: tuple
    prototypes: np.ndarray
    provenance: Optional[tuple] = None

    @property
    def num_classes(self):
        return self.prototypes.shape[0]

    @property
    def dim(self):
        return self.prototypes.shape[1]


def build_prototypes(description_features: Sequence, provenance=None) -> PrototypeBank:
    feats = []
    protos = []
    dim = None
    for c, E in enumerate(description_features):
        E = np.atleast_2d(np.asarray(E, dtype=np.float64))
        if E.size == 0 or E.shape[0] == 0:
            raise EmptyClass(f"class {c} has no description features")
        if dim is None:
            dim = E.shape[1]
        elif E.shape[1] != dim:
            raise ShapeMismatch(f"class {c} features have dimension {E.shape[1]}, expected {dim}")
        total = E.sum(axis=0)
        try:
            protos.append(sphere.normalize(total))
        except ZeroNorm:
            raise ZeroNorm(f"description features of class {c} cancel exactly") from None
        feats.append(E)
    if not feats:
        raise EmptyClass("no classes given")
    return PrototypeBank(tuple(feats), np.vstack(protos), provenance)


def _check_rows(X, name):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {X.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    bad = np.flatnonzero(np.abs(norms - 1.0) > ROW_UNIT_TOL)
    if bad.size:
        raise NotNormalized(f"{name} row {bad[0]} has norm {norms[bad[0]]!r}")
    return X


def _prototypes(protos):
    return protos.prototypes if isinstance(protos, PrototypeBank) else np.asarray(protos, dtype=np.float64)


def consistency_img(fused_vis, frozen_vis):
    F = _check_rows(fused_vis, "fused_vis")
    Z = _check_rows(frozen_vis, "frozen_vis")
    if F.shape != Z.shape:
        raise ShapeMismatch(f"fused {F.shape} vs frozen {Z.shape}")
    return float(np.mean(1.0 - np.einsum("ij,ij->i", F, Z)))


def consistency_txt(fused_txt, prototypes):
    F = _check_rows(fused_txt, "fused_txt")
    W = _prototypes(prototypes)
    if F.shape != W.shape:
        raise ShapeMismatch(f"fused_txt {F.shape} vs prototypes {W.shape}")
    return float(np.mean(1.0 - np.einsum("ij,ij->i", F, W)))


def logits(fused_vis_row, fused_txt, tau):
    if not tau > 0:
        raise ValueError("tau must be positive")
    v = np.asarray(fused_vis_row, dtype=np.float64)
    T = np.atleast_2d(np.asarray(fused_txt, dtype=np.float64))
    if T.shape[1] != v.shape[0]:
        raise ShapeMismatch(f"text rows have dimension {T.shape[1]}, visual has {v.shape[0]}")
    return tau * (T @ v)


def cross_entropy(logit_values, label):
    """``log sum exp(l) - l[label]`` with max subtraction."""
    ell = np.asarray(logit_values, dtype=np.float64)
    if not 0 <= label < ell.shape[0]:
        raise LabelOutOfRange(f"label {label} outside [0, {ell.shape[0]})")
    m = ell.max()
    return float(np.log(np.sum(np.exp(ell - m))) + m - ell[label])


def _check_labels(labels, C):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise LabelOutOfRange(f"labels must lie in [0, {C})")
    return labels


def total_loss(frozen_vis, prompt_vis, frozen_txt, prompt_txt, labels, prototypes, lam, tau,
               kappa=sphere.DEFAULT_KAPPA):
    """Fuse both towers, then return the full LossBreakdown on the fused features."""
    if lam < 0 or not tau > 0:
        raise ValueError("need lam >= 0 and tau > 0")
    Fv = sphere.fuse_rows(frozen_vis, prompt_vis, kappa)
    Ft = sphere.fuse_rows(frozen_txt, prompt_txt, kappa)
    W = _prototypes(prototypes)
    if W.shape != Ft.shape:
        raise ShapeMismatch(f"prototypes {W.shape} vs text features {Ft.shape}")
    labels = _check_labels(labels, Ft.shape[0])
    if labels.shape[0] != Fv.shape[0]:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {Fv.shape[0]} samples")
    L = tau * (Fv @ Ft.T)
    per, _ = _kernels.softmax_xent(L, labels)
    ce = float(np.mean(per))
    img = float(np.mean(1.0 - np.einsum("ij,ij->i", Fv, np.asarray(frozen_vis))))
    txt = float(np.mean(1.0 - np.einsum("ij,ij->i", Ft, W)))
    con = img + txt
    return LossBreakdown(ce, img, txt, con, ce + lam * con, float(lam))


@dataclass
class Forward:
    """Intermediate tensors of one forward pass through both towers."""

    h_vis: np.ndarray
    u_vis_norm: np.ndarray
    f_vis: np.ndarray
    s_vis_norm: np.ndarray
    h_txt: np.ndarray
    u_txt_norm: np.ndarray
    f_txt: np.ndarray
    s_txt_norm: np.ndarray
    probs: np.ndarray
    loss: LossBreakdown


def forward(params: PromptParams, frozen_vis, frozen_txt, labels, prototypes, lam, tau,
            kappa=sphere.DEFAULT_KAPPA) -> Forward:
    Z = np.asarray(frozen_vis, dtype=np.float64)
    Zt = np.asarray(frozen_txt, dtype=np.float64)
    W = _prototypes(prototypes)
    if W.shape != Zt.shape:
        raise ShapeMismatch(f"prototypes {W.shape} vs text features {Zt.shape}")
    labels = _check_labels(labels, Zt.shape[0])
    if labels.shape[0] != Z.shape[0]:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {Z.shape[0]} samples")
    Hv, nu_v = prompt_rows(Z, params.vis_map, params.vis_bias)
    Ht, nu_t = prompt_rows(Zt, params.txt_map, params.txt_bias)
    Fv, ns_v = sphere.fuse_rows(Z, Hv, kappa, return_norms=True)
    Ft, ns_t = sphere.fuse_rows(Zt, Ht, kappa, return_norms=True)
    L = tau * (Fv @ Ft.T)
    per, P = _kernels.softmax_xent(L, labels)
    ce = float(np.mean(per))
    img = float(np.mean(1.0 - np.einsum("ij,ij->i", Fv, Z)))
    txt = float(np.mean(1.0 - np.einsum("ij,ij->i", Ft, W)))
    con = img + txt
    loss = LossBreakdown(ce, img, txt, con, ce + lam * con, float(lam))
    return Forward(Hv, nu_v, Fv, ns_v, Ht, nu_t, Ft, ns_t, P, loss)


def grad_total(params: PromptParams, frozen_vis, frozen_txt, labels, prototypes, lam, tau,
               kappa=sphere.DEFAULT_KAPPA):
    """Exact gradient of the total loss with respect to every prompt parameter.

    Returns ``(LossBreakdown, PromptParams)``; frozen features are constants.
    """
    Z = np.asarray(frozen_vis, dtype=np.float64)
    Zt = np.asarray(frozen_txt, dtype=np.float64)
    W = _prototypes(prototypes)
    fw = forward(params, Z, Zt, labels, W, lam, tau, kappa)
    N, C = fw.probs.shape

    G = fw.probs.copy()
    G[np.arange(N), np.asarray(labels)] -= 1.0
    G /= N
    # d total / d fused features
    g_fv = tau * (G @ fw.f_txt) - (lam / N) * Z
    g_ft = tau * (G.T @ fw.f_vis) - (lam / C) * W

    # fused = normalize(z + h): back through the renormalization, then z is constant
    g_hv = _kernels.normalize_backward(g_fv, fw.f_vis, fw.s_vis_norm)
    g_ht = _kernels.normalize_backward(g_ft, fw.f_txt, fw.s_txt_norm)
    # h = normalize(z + M z + b)
    g_uv = _kernels.normalize_backward(g_hv, fw.h_vis, fw.u_vis_norm)
    g_ut = _kernels.normalize_backward(g_ht, fw.h_txt, fw.u_txt_norm)

    grads = PromptParams(g_uv.T @ Z, g_uv.sum(axis=0), g_ut.T @ Zt, g_ut.sum(axis=0))
    return fw.loss, grads
