"""Desk-scale semi-supervised learning laboratory.

Threshold pseudo-labeling with two confidence-shaping additions: a loss that
spreads residual probability mass uniformly over non-target classes, and
rank-based negative labels allocated through an adaptive top-k cutoff.  All
pieces are exposed as testable operations over plain numpy arrays.
"""

__version__ = "0.1.0"

from .augment import AugmentPolicy, strong_augment, weak_augment
from .data import Dataset, batch_iterator, export_dataset, generate, import_dataset, split_dataset
from .labeling import (
    SelectionState,
    build_selection_state,
    compute_adaptive_k,
    compute_temp_labels,
    rank_classes,
)
from .losses import (
    LossBreakdown,
    anl_grad,
    anl_loss,
    eml_grad,
    eml_loss,
    eml_target_class_gradient,
    eml_targets,
    l2_consistency,
    supervised_grad,
    supervised_loss,
    total_loss,
    unsupervised_grad,
    unsupervised_loss,
)
from .mathutils import (
    cross_entropy_hard,
    entropy,
    finite_difference_gradient,
    softmax,
    softmax_grad_from_prob_grad,
)
from .model import (
    ModelGradients,
    ModelParameters,
    backward,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .trainer import (
    ConfigError,
    DataConfig,
    ExperimentConfig,
    Trainer,
    TrainingDivergenceError,
    TrainResult,
    build_dataset,
    cosine_lr,
    load_config,
    parse_config_text,
    sgd_momentum_step,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
