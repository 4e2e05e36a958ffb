"""Organ-to-tumor voxel transform and the online synthesis entry point.

The generator predicts a bounded intensity distance which is subtracted
from the blurred source texture inside the sampled mask; voxels outside
the mask are passed through bit-exactly.  Online synthesis samples a fresh
mask per call, applies the transform, and scores the result with the
frozen baseline segmentor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import GENERATOR, ShapeError, Tensor, no_grad
from .nn import tensor as T
from .phantoms import Case
from .tumors import PlacementError, TumorShapeParams, sample_tumor_mask
from .util import subseed
from .volume import ORGAN, TUMOR, LabelMask, Volume, gaussian_smooth

PASS = "pass"
FAIL = "fail"
UNFILTERED = "unfiltered"


@dataclass(frozen=True)
class SyntheticSample:
    """One synthesis outcome: source case, sampled mask, transformed volume,
    segmented fraction, and the quality verdict."""

    case_id: str
    original: Volume
    mask: LabelMask
    synthetic: Volume
    fraction: float
    verdict: str
    seed: int


def _check_inputs(x: Volume, mask: LabelMask, generator) -> None:
    if x.dims != mask.dims:
        raise ShapeError(f"volume dims {x.dims} do not match mask dims {mask.dims}")
    if generator.role != GENERATOR:
        raise ValueError(f"expected a generator-role model, got {generator.role!r}")
    lo, hi = float(x.data.min()), float(x.data.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"volume must be normalized to [0, 1], found range [{lo}, {hi}]")


def synthesize(x: Volume, mask: LabelMask, generator, blur_sigma: float = 1.0) -> Volume:
    """Blend generator-predicted tumor texture into ``x`` where the mask is set.

    Inside the mask the output is clamp(x - tanh(G(x)) * blur(x), 0, 1);
    outside it equals ``x`` bit-exactly.
    """
    _check_inputs(x, mask, generator)
    with no_grad():
        g_out = generator(Tensor(x.data[None])).data[0]
    offset = np.tanh(g_out) * gaussian_smooth(x.data, blur_sigma)
    blended = np.clip(x.data - offset, 0.0, 1.0).astype(np.float32)
    out = np.where(mask.data == TUMOR, blended, x.data)
    return Volume(out, x.spacing)


def synthesize_graph(
    x: Volume, mask: LabelMask, generator, blur_sigma: float = 1.0
) -> Tensor:
    """Differentiable version of :func:`synthesize` for adversarial training.

    Gradients flow to the generator only through masked voxels; the blur of
    the source volume is a constant with respect to the generator.
    """
    _check_inputs(x, mask, generator)
    xc = Tensor(x.data[None])
    gx = Tensor(gaussian_smooth(x.data, blur_sigma)[None])
    m = Tensor((mask.data == TUMOR)[None].astype(np.float32))
    blended = T.clip(xc - T.tanh(generator(xc)) * gx, 0.0, 1.0)
    return xc * (1.0 - m) + blended * m


def synthesize_online(
    case: Case,
    generator,
    baseline,
    params: TumorShapeParams,
    filter_cfg,
    seed: int,
    blur_sigma: float = 1.0,
) -> SyntheticSample:
    """Sample a tumor mask for one case, synthesize, score, and filter.

    Mask placement failures degrade to a pass-through sample (original
    volume, empty mask, verdict fail) rather than aborting training.
    Works on labeled cases too: placement treats only organ-labeled voxels
    as candidates, so real tumor regions are never overwritten.
    """
    from .filtering import quality_test, segmented_fraction

    rng = subseed("synthesize-online", seed, case.case_id)
    empty = LabelMask(np.zeros(case.labels.dims, dtype=np.uint8))
    if case.labels.count(ORGAN) == 0:
        return SyntheticSample(case.case_id, case.volume, empty, case.volume, 0.0, FAIL, seed)
    try:
        mask = sample_tumor_mask(case.labels, params, rng)
    except PlacementError:
        return SyntheticSample(case.case_id, case.volume, empty, case.volume, 0.0, FAIL, seed)
    synthetic = synthesize(case.volume, mask, generator, blur_sigma)
    fraction = segmented_fraction(baseline, synthetic, mask, filter_cfg.cutoff)
    sample = SyntheticSample(
        case.case_id, case.volume, mask, synthetic, fraction, UNFILTERED, seed
    )
    verdict, _ = quality_test(sample, filter_cfg)
    return replace(sample, verdict=verdict)
