"""Segmentation-based quality control for synthetic tumors.

The frozen baseline segmentor scores each sample by the fraction of masked
voxels it segments as tumor.  A threshold turns the score into an
accept/reject verdict; the adaptive mode keeps every sample but weights its
training loss by the score; mode "off" disables filtering entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Tensor, no_grad
from .volume import TUMOR, LabelMask, Volume

MODE_THRESHOLD = "threshold"
MODE_ADAPTIVE = "adaptive"
MODE_OFF = "off"

PASS = "pass"
FAIL = "fail"


class EmptyMaskError(ValueError):
    """Score undefined for an empty tumor mask."""


@dataclass(frozen=True)
class FilterConfig:
    mode: str = MODE_THRESHOLD
    threshold: float = 0.7
    cutoff: float = 0.5

    def __post_init__(self):
        if self.mode not in (MODE_THRESHOLD, MODE_ADAPTIVE, MODE_OFF):
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ValueError(f"cutoff must be in [0, 1], got {self.cutoff}")


def segmented_fraction(
    segmentor, synthetic: Volume, mask: LabelMask, cutoff: float = 0.5
) -> float:
    """Fraction of mask voxels the segmentor marks as tumor at ``cutoff``."""
    region = mask.data == TUMOR
    total = int(region.sum())
    if total == 0:
        raise EmptyMaskError("mask has no tumor voxels")
    with no_grad():
        prob = segmentor(Tensor(synthetic.data[None])).data[0]
    return float(np.count_nonzero(prob[region] >= cutoff)) / total


def quality_test(sample, cfg: FilterConfig) -> tuple[str, Volume]:
    """Accept or reject one scored sample.

    Threshold mode passes when score >= threshold (boundary inclusive) and
    returns the synthetic volume, otherwise the untouched original; the
    sample's tumor mask must then be discarded for training.  Adaptive and
    off modes always pass (adaptive callers weight the loss by the score).
    """
    if cfg.mode in (MODE_OFF, MODE_ADAPTIVE):
        return PASS, sample.synthetic
    if sample.fraction >= cfg.threshold:
        return PASS, sample.synthetic
    return FAIL, sample.original


def sample_weight(sample, cfg: FilterConfig) -> float:
    """Training-loss weight for a sample under the configured mode."""
    if cfg.mode == MODE_ADAPTIVE:
        return float(sample.fraction)
    return 1.0


def binary_dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice overlap of two boolean arrays; empty/empty counts as 1."""
    a = int(np.count_nonzero(pred))
    b = int(np.count_nonzero(truth))
    if a == 0 and b == 0:
        return 1.0
    inter = int(np.count_nonzero(pred & truth))
    return 2.0 * inter / (a + b)


def quality_report(samples, segmentor, cfg: FilterConfig) -> dict:
    """Aggregate filter statistics over a pool of scored samples.

    Returns acceptance rate, mean score over all and accepted samples, and
    the segmentor's mean Dice on synthetic tumors over all and accepted
    samples (how much filtering lifts apparent synthesis quality).
    """
    if not samples:
        raise ValueError("quality_report needs at least one sample")
    rows = []
    for s in samples:
        region = s.mask.data == TUMOR
        accepted = quality_test(s, cfg)[0] == PASS and region.any()
        if region.any():
            with no_grad():
                prob = segmentor(Tensor(s.synthetic.data[None])).data[0]
            dice = binary_dice(prob >= cfg.cutoff, region)
        else:
            dice = 0.0
        rows.append(
            {
                "case_id": s.case_id,
                "fraction": float(s.fraction),
                "dice": dice,
                "accepted": bool(accepted),
                "mask_voxels": int(region.sum()),
            }
        )
    accepted_rows = [r for r in rows if r["accepted"]]
    n = len(rows)
    report = {
        "samples": n,
        "accepted": len(accepted_rows),
        "acceptance_rate": len(accepted_rows) / n,
        "mean_fraction_all": float(np.mean([r["fraction"] for r in rows])),
        "mean_dice_all": float(np.mean([r["dice"] for r in rows])),
        "mean_fraction_accepted": (
            float(np.mean([r["fraction"] for r in accepted_rows])) if accepted_rows else 0.0
        ),
        "mean_dice_accepted": (
            float(np.mean([r["dice"] for r in accepted_rows])) if accepted_rows else 0.0
        ),
        "per_sample": rows,
    }
    return report
