"""Segmentation and classification losses built from autodiff primitives."""

from __future__ import annotations

import numpy as np

from ..volume import TUMOR, LabelMask
from .tensor import Tensor, clip, log, softplus, tsum

_PROB_EPS = 1e-7
_DICE_SMOOTH = 1e-5


class DegenerateLossError(ValueError):
    """Loss undefined because every voxel is ignored."""


def dice_ce_loss(pred: Tensor, target, ignore: np.ndarray | None = None) -> Tensor:
    """Mean of soft-Dice and voxel-wise cross-entropy on the tumor channel.

    ``pred`` holds probabilities shaped (1, X, Y, Z); ``target`` is a
    LabelMask (tumor = label 2) or a boolean array of the same spatial
    shape.  Voxels where ``ignore`` is true contribute to neither term.
    The Dice denominator carries a 1e-5 smoothing term.
    """
    if isinstance(target, LabelMask):
        t_arr = target.data == TUMOR
    else:
        t_arr = np.asarray(target).astype(bool)
    if t_arr.shape != pred.data.shape[1:]:
        raise ValueError(
            f"target shape {t_arr.shape} does not match prediction {pred.data.shape}"
        )
    if ignore is not None:
        region = ~np.asarray(ignore).astype(bool)
        if region.shape != t_arr.shape:
            raise ValueError("ignore mask shape does not match target")
    else:
        region = np.ones(t_arr.shape, dtype=bool)
    n = int(region.sum())
    if n == 0:
        raise DegenerateLossError("all voxels ignored")

    dt = pred.data.dtype
    r = region[None].astype(dt)
    t = (t_arr & region)[None].astype(dt)

    p = clip(pred, _PROB_EPS, 1.0 - _PROB_EPS)
    ce = tsum(log(p) * t + log(1.0 - p) * (r - t)) * (-1.0 / n)
    inter = tsum(p * t)
    denom = tsum(p * r) + (float(t.sum()) + _DICE_SMOOTH)
    dice = 1.0 - (2.0 * inter) / denom
    return (dice + ce) * 0.5


def bce_with_logits(logit: Tensor, target: float) -> Tensor:
    """Binary cross-entropy from a raw logit; numerically stable."""
    return tsum(softplus(logit) - logit * float(target))
