"""Unit-sphere fusion, cosine consistency losses, manifold drift and bound calculus."""

from ._kernels import BACKEND
from .bounds import (
    AnchorStats,
    BoundParams,
    anchor_stats,
    empirical_logit_perturbation,
    generalization_bound,
    logit_perturbation_bound,
    loss_bound_B,
    non_opposition_margins,
    peeling_bound,
    rademacher_bound,
)
from .drift import (
    DriftReport,
    FeatureMatrix,
    PrincipalSubspace,
    decompose_shift,
    drift_sensitivity,
    fit_subspace,
    manifold_drift,
    off_manifold_ratio,
)
from .fileio import load_feature_matrix, save_feature_matrix
from .losses import (
    LossBreakdown,
    PrototypeBank,
    build_prototypes,
    consistency_img,
    consistency_txt,
    cross_entropy,
    grad_total,
    logits,
    total_loss,
)
from .prompt import PromptParams, prompt_branch
from .sphere import contraction_gap, cosine, fuse, fusion_lipschitz_check, normalize, sphere_distance_sq
from .trainer import TaskSpec, TrainerConfig, compare_lambda, generate_task, train

__version__ = "0.1.0"
