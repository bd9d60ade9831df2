"""Desk-scale two-tower trainer on synthetic features with a planted shortcut.

Frozen visual features mix a class direction from a transferable subspace,
a shortcut pattern from an orthogonal shortcut subspace
(label-correlated on the training split, weaker and uncorrelated on the
held-out split) and isotropic noise. The prompt branch is trained by
full-batch gradient descent on the cross-entropy plus ``lambda`` times the
cosine-consistency terms, all evaluated on fused features.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import bounds, drift, losses, sphere
from .errors import InvalidParameter, NearOpposition, NonFinite, RankConflict, ZeroNorm
from .losses import LossBreakdown, PrototypeBank
from .prompt import PromptParams, prompt_rows

MAX_RESAMPLE = 100


def make_rng(seed):
    """Counter-based generator; every random draw in the package flows from one seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class TaskSpec:
    num_classes: int = 8
    dim: int = 64
    transferable_rank: int = 8
    shortcut_rank: int = 8
    train_per_class: int = 16
    test_per_class: int = 64
    shortcut_strength: float = 0.6
    noise_std: float = 0.1
    class_spread: float = 0.5
    test_shortcut_scale: float = 0.7
    prototype_replicas: int = 4
    prototype_noise: float = 0.05

    def validate(self):
        if self.num_classes < 1 or self.dim < 2:
            raise InvalidParameter("need num_classes >= 1 and dim >= 2")
        if self.transferable_rank < 1 or self.shortcut_rank < 0:
            raise RankConflict("transferable rank must be >= 1 and shortcut rank >= 0")
        if self.transferable_rank + self.shortcut_rank > self.dim:
            raise RankConflict(
                f"transferable rank {self.transferable_rank} + shortcut rank "
                f"{self.shortcut_rank} exceeds dim {self.dim}"
            )
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise InvalidParameter("samples per class must be >= 1")
        if not 0 <= self.shortcut_strength < 1:
            raise InvalidParameter("shortcut_strength must lie in [0, 1)")
        if not 0 <= self.test_shortcut_scale < 1:
            raise InvalidParameter("test_shortcut_scale must lie in [0, 1)")
        if not self.class_spread > 0:
            raise InvalidParameter("class_spread must be positive")
        if self.noise_std < 0 or self.prototype_noise < 0 or self.prototype_replicas < 1:
            raise InvalidParameter("noise levels must be non-negative and replicas >= 1")


@dataclass(frozen=True)
class SyntheticTask:
    spec: TaskSpec
    seed: int
    transferable_basis: np.ndarray
    shortcut_basis: np.ndarray
    class_directions: np.ndarray
    shortcut_patterns: np.ndarray
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    text_features: np.ndarray
    prototypes: PrototypeBank


def _normalized_draw(rng, mean_rows, noise_std):
    """Rows ``normalize(mean + noise)``; zero-norm rows are redrawn up to MAX_RESAMPLE times."""
    X = mean_rows + rng.normal(0.0, noise_std, mean_rows.shape) if noise_std > 0 else mean_rows.copy()
    for _ in range(MAX_RESAMPLE):
        norms = np.linalg.norm(X, axis=1)
        bad = norms <= sphere.ZERO_NORM_THRESHOLD
        if not bad.any():
            return X / norms[:, None]
        if noise_std == 0:
            break
        X[bad] = mean_rows[bad] + rng.normal(0.0, noise_std, (int(bad.sum()), X.shape[1]))
    raise ZeroNorm("generator produced a zero-norm feature after resampling")


def generate_task(spec: TaskSpec = TaskSpec(), seed: int = 0) -> SyntheticTask:
    spec.validate()
    rng = make_rng(seed)
    C, d, q, s = spec.num_classes, spec.dim, spec.transferable_rank, spec.shortcut_rank

    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    tbasis = Q[:, :q]
    sbasis = Q[:, q : q + s]

    # classes share a common transferable direction and differ by class_spread
    common = rng.normal(size=q)
    common /= np.linalg.norm(common)
    coeffs = rng.normal(size=(C, q))
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    coeffs = common + spec.class_spread * coeffs
    coeffs /= np.linalg.norm(coeffs, axis=1, keepdims=True)
    directions = coeffs @ tbasis.T
    if s:
        scoeffs = rng.normal(size=(C, s))
        scoeffs /= np.linalg.norm(scoeffs, axis=1, keepdims=True)
        patterns = scoeffs @ sbasis.T
    else:
        patterns = np.zeros((C, d))

    y_train = np.repeat(np.arange(C), spec.train_per_class)
    y_test = np.repeat(np.arange(C), spec.test_per_class)
    # train: shortcut pattern follows the label; test: a weaker pattern of an independent class
    test_shortcut = rng.integers(0, C, y_test.shape[0])
    k = spec.shortcut_strength
    X_train = _normalized_draw(rng, directions[y_train] + k * patterns[y_train], spec.noise_std)
    X_test = _normalized_draw(rng, directions[y_test] + spec.test_shortcut_scale * k * patterns[test_shortcut], spec.noise_std)
    text = _normalized_draw(rng, directions, spec.noise_std)

    replicas = [
        _normalized_draw(rng, np.repeat(text[c : c + 1], spec.prototype_replicas, axis=0), spec.prototype_noise)
        for c in range(C)
    ]
    bank = losses.build_prototypes(replicas, provenance=tuple(f"synthetic-replica:{c}" for c in range(C)))
    return SyntheticTask(spec, seed, tbasis, sbasis, directions, patterns,
                         X_train, y_train, X_test, y_test, text, bank)


def with_prototypes(task: SyntheticTask, bank: PrototypeBank) -> SyntheticTask:
    if bank.prototypes.shape != task.text_features.shape:
        raise InvalidParameter(
            f"prototype bank is {bank.prototypes.shape}, task text features are {task.text_features.shape}"
        )
    return replace(task, prototypes=bank)


@dataclass(frozen=True)
class TrainerConfig:
    lam: float = 12.0
    tau: float = 10.0
    learning_rate: float = 0.05
    epochs: int = 300
    seed: int = 0
    d_pca_report: int = 8
    init_std: float = 0.02
    kappa: float = sphere.DEFAULT_KAPPA

    def validate(self):
        checks = (
            (self.lam >= 0, "lambda must be >= 0"),
            (self.tau > 0, "tau must be positive"),
            (self.learning_rate >= 0, "learning rate must be >= 0"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.d_pca_report >= 1, "d_pca_report must be >= 1"),
            (self.init_std > 0, "init_std must be positive"),
            (self.kappa > 0, "kappa must be positive"),
        )
        for ok, msg in checks:
            if not ok:
                raise InvalidParameter(msg)


@dataclass
class TrainingReport:
    lam: float
    seed: int
    history: List[LossBreakdown]
    train_accuracy: float
    test_accuracy: float
    drift: drift.DriftReport
    mean_alignment: float
    kappa_min: float
    params: Optional[PromptParams] = field(default=None, repr=False)


def _fused(task_feats, frozen_txt, params, kappa):
    Hv, _ = prompt_rows(task_feats, params.vis_map, params.vis_bias)
    Ht, _ = prompt_rows(frozen_txt, params.txt_map, params.txt_bias)
    Fv = sphere.fuse_rows(task_feats, Hv, kappa)
    Ft = sphere.fuse_rows(frozen_txt, Ht, kappa)
    return Hv, Fv, Ft


def _accuracy(Fv, Ft, labels):
    return float(np.mean(np.argmax(Fv @ Ft.T, axis=1) == labels))


def evaluate(task: SyntheticTask, params: PromptParams, config: TrainerConfig):
    """Accuracies, held-out drift, alignment and margin for fixed parameters."""
    _, Fv_tr, Ft = _fused(task.train_features, task.text_features, params, config.kappa)
    Hv, Fv, Ft = _fused(task.test_features, task.text_features, params, config.kappa)
    report = drift.manifold_drift(task.test_features, Fv, config.d_pca_report)
    return dict(
        train_accuracy=_accuracy(Fv_tr, Ft, task.train_labels),
        test_accuracy=_accuracy(Fv, Ft, task.test_labels),
        drift=report,
        mean_alignment=float(np.mean(np.einsum("ij,ij->i", Fv, task.test_features))),
        kappa_min=bounds.non_opposition_margins(task.test_features, Hv),
    )


def train(task: SyntheticTask, config: TrainerConfig = TrainerConfig(), keep_params=True) -> TrainingReport:
    """Full-batch gradient descent on the total loss for ``config.epochs`` steps.

    ``history[e]`` is the loss at the parameters entering epoch ``e``.
    """
    config.validate()
    rng = make_rng(config.seed)
    params = PromptParams.random(task.spec.dim, config.init_std, rng)
    history = []
    for epoch in range(config.epochs):
        try:
            loss, grads = losses.grad_total(
                params, task.train_features, task.text_features, task.train_labels,
                task.prototypes, config.lam, config.tau, config.kappa,
            )
        except NearOpposition as exc:
            raise NearOpposition(f"epoch {epoch}: {exc}", row=exc.row, epoch=epoch) from None
        if not math.isfinite(loss.total) or not np.all(np.isfinite(grads.flat())):
            raise NonFinite(f"epoch {epoch}: non-finite loss or gradient", epoch=epoch)
        history.append(loss)
        if config.learning_rate:
            params = params.axpy(-config.learning_rate, grads)
    try:
        final = evaluate(task, params, config)
    except NearOpposition as exc:
        raise NearOpposition(f"epoch {config.epochs}: {exc}", row=exc.row, epoch=config.epochs) from None
    return TrainingReport(config.lam, config.seed, history, params=params if keep_params else None, **final)


@dataclass(frozen=True)
class CompareRow:
    lam: float
    delta: float
    mean_alignment: float
    test_accuracy: float


def compare_lambda(task: SyntheticTask, config: TrainerConfig, lambdas):
    """Train once per lambda with identical task and seed; returns rows in the given order."""
    rows = []
    for lam in lambdas:
        rep = train(task, replace(config, lam=float(lam)), keep_params=False)
        rows.append(CompareRow(float(lam), rep.drift.delta, rep.mean_alignment, rep.test_accuracy))
    return rows
