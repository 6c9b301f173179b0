"""元训练（内外双层优化）与推理期自适应"""

from .adapt import AdaptResult, adapt_and_superresolve, superresolve
from .losses import (
    adversarial_loss,
    discriminator_loss,
    inner_loss,
    logistic_discriminator_loss,
    mask_regularizer,
    masked_l1,
    outer_loss,
    weighted_objective,
)
from .meta import StepMetrics, TrainState, compute_meta_gradients, fit, inner_update, meta_gradient, train_step
from .tasks import TaskSampler, face_patches, make_task

__all__ = [
    "AdaptResult",
    "StepMetrics",
    "TaskSampler",
    "TrainState",
    "adapt_and_superresolve",
    "adversarial_loss",
    "compute_meta_gradients",
    "discriminator_loss",
    "face_patches",
    "fit",
    "inner_loss",
    "inner_update",
    "logistic_discriminator_loss",
    "make_task",
    "mask_regularizer",
    "masked_l1",
    "meta_gradient",
    "outer_loss",
    "superresolve",
    "train_step",
    "weighted_objective",
]
