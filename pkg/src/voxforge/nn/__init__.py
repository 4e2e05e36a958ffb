"""Minimal differentiable network stack: autodiff tensors, 3D conv layers,
losses, and Adam, sized for desk-scale volumetric training."""

from .layers import (
    CLASSIFIER,
    GENERATOR,
    SEGMENTOR,
    Conv3d,
    Model,
    PatchClassifier,
    ShapeError,
    UNet3d,
    build_model,
    load_model,
    save_model,
)
from .losses import DegenerateLossError, bce_with_logits, dice_ce_loss
from .optim import Adam
from .tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "CLASSIFIER",
    "Conv3d",
    "DegenerateLossError",
    "GENERATOR",
    "Model",
    "PatchClassifier",
    "SEGMENTOR",
    "ShapeError",
    "Tensor",
    "UNet3d",
    "bce_with_logits",
    "build_model",
    "dice_ce_loss",
    "load_model",
    "no_grad",
    "save_model",
]
