"""Synthetic tumor mask sampling: ellipsoid seeding inside the organ,
elastic warping by a smoothed random displacement field, salt-noise voxel
dropout with one reconnecting closing pass, and connected-component
cleanup.

Every produced tumor voxel is guaranteed to lie inside the organ region
eroded by the configured margin, for any seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import ORGAN, TUMOR, LabelMask, gaussian_smooth


class PlacementError(RuntimeError):
    """No valid tumor location found within the attempt budget."""


@dataclass(frozen=True)
class TumorShapeParams:
    """Geometry knobs for sampled tumor masks.

    ``radius_range`` bounds each semi-axis independently (voxels);
    ``warp_amplitude`` scales the elastic displacement field smoothed with
    ``warp_sigma``; ``keep_prob`` is the salt-noise keep probability;
    ``margin`` erodes the organ before placement; ``counts`` is the uniform
    tumors-per-case distribution.
    """

    radius_range: tuple[float, float] = (2.5, 5.5)
    warp_amplitude: float = 3.0
    warp_sigma: float = 4.0
    keep_prob: float = 0.9
    margin: float = 1.0
    counts: tuple[int, ...] = (1, 2, 3)
    max_attempts: int = 100

    def __post_init__(self):
        if self.radius_range[0] < 1.0 or self.radius_range[1] < self.radius_range[0]:
            raise ValueError(f"radii must satisfy 1 <= lo <= hi, got {self.radius_range}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.warp_amplitude < 0 or self.warp_sigma < 0:
            raise ValueError("warp parameters must be >= 0")
        if not self.counts or min(self.counts) < 1:
            raise ValueError(f"counts must be positive, got {self.counts}")
        object.__setattr__(self, "radius_range", tuple(self.radius_range))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))


def _ellipsoid(dims, center, radii) -> np.ndarray:
    grids = np.ogrid[tuple(slice(0, n) for n in dims)]
    acc = np.zeros(dims, dtype=np.float64)
    for g, c, r in zip(grids, center, radii):
        acc = acc + ((g - c) / r) ** 2
    return acc <= 1.0


def _warp(shape: np.ndarray, amplitude: float, sigma: float, rng) -> np.ndarray:
    """Nearest-voxel lookup through a smoothed random displacement field."""
    dims = shape.shape
    src = []
    for axis in range(3):
        field = gaussian_smooth(rng.standard_normal(dims), sigma)
        peak = np.abs(field).max()
        if peak > 0:
            field *= amplitude / peak
        coords = np.arange(dims[axis]).reshape(
            [-1 if a == axis else 1 for a in range(3)]
        )
        src.append(np.clip(np.rint(coords - field).astype(np.intp), 0, dims[axis] - 1))
    return shape[src[0], src[1], src[2]]


def _largest_component(shape: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(shape)
    if n <= 1:
        return shape
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == sizes.argmax()


def eroded_organ_region(organ: LabelMask, margin: float) -> np.ndarray:
    """Voxels labeled organ whose Euclidean distance to the rest exceeds
    ``margin``."""
    region = organ.data == ORGAN
    if margin == 0:
        return region
    return ndimage.distance_transform_edt(region) > margin


def sample_tumor_mask(organ: LabelMask, params: TumorShapeParams, rng) -> LabelMask:
    """Sample a synthetic tumor mask (label 2) inside the eroded organ.

    The per-tumor stage order (warp, containment clip, dropout, closing,
    containment clip, largest component) keeps dropout monotone: a lower
    keep probability can only shrink the result for the same rng stream.
    """
    allowed = eroded_organ_region(organ, params.margin)
    allowed_idx = np.argwhere(allowed)
    dims = organ.dims
    count = int(params.counts[rng.integers(len(params.counts))])
    out = np.zeros(dims, dtype=bool)
    lo, hi = params.radius_range
    for _ in range(count):
        placed = None
        if len(allowed_idx):
            for _attempt in range(params.max_attempts):
                center = allowed_idx[rng.integers(len(allowed_idx))]
                radii = rng.uniform(lo, hi, size=3)
                ell = _ellipsoid(dims, center, radii)
                if not np.any(ell & ~allowed):
                    placed = ell
                    break
        if placed is None:
            raise PlacementError(
                f"no tumor location found in {params.max_attempts} attempts"
            )
        shape = placed
        if params.warp_amplitude > 0:
            shape = _warp(shape, params.warp_amplitude, params.warp_sigma, rng) & allowed
        # the keep field is always drawn so rng streams match across keep_prob
        keep_field = rng.random(dims)
        shape = shape & (keep_field < params.keep_prob)
        shape = ndimage.binary_closing(shape) & allowed
        out |= _largest_component(shape)
    return LabelMask(np.where(out, TUMOR, 0).astype(np.uint8))
