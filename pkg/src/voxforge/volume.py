"""Core 3D volume and label-mask types, intensity windowing, separable
Gaussian smoothing, and the bit-exact VXFORGE1 on-disk format.

Volumes are dense float32 grids indexed ``data[x, y, z]``; masks are uint8
grids over the label set {0 background, 1 organ, 2 tumor}.  Both are treated
as immutable after construction and are safe to share between workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

BACKGROUND = 0
ORGAN = 1
TUMOR = 2
LABELS = (BACKGROUND, ORGAN, TUMOR)

MAGIC = b"VXFORGE1"
_TAG_VOLUME = 0
_TAG_MASK = 1

# header = magic(8) + dims(3 x u32 le) + spacing(3 x f32 le) + dtype tag(1)
_HEADER = struct.Struct("<8s3I3fB")

# guards absurd headers before allocating the payload buffer
_MAX_VOXELS = 1 << 31


class VolumeError(ValueError):
    """Invalid volume construction or operation parameters."""


class VolumeFormatError(VolumeError):
    """Malformed VXFORGE1 file; message names the offending field."""


@dataclass(frozen=True)
class Volume:
    """Scalar 3D grid with voxel spacing in millimeters.

    ``data`` has shape ``(nx, ny, nz)`` and dtype float32.  Normalized
    volumes hold values in [0, 1].
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise VolumeError(f"volume data must be 3D with dims >= 1, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabelMask:
    """Integer label grid matching a paired Volume's dims."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise VolumeError(f"mask data must be 3D with dims >= 1, got shape {arr.shape}")
        if arr.size and arr.max() > TUMOR:
            raise VolumeError(f"mask contains labels outside {LABELS}")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def count(self, label: int) -> int:
        return int(np.count_nonzero(self.data == label))


def normalize(v: Volume, lo: float, hi: float) -> Volume:
    """Map intensities through the window [lo, hi] onto [0, 1], clamping."""
    if not hi > lo:
        raise VolumeError(f"normalize window requires hi > lo, got lo={lo}, hi={hi}")
    out = (v.data - np.float32(lo)) / np.float32(hi - lo)
    np.clip(out, 0.0, 1.0, out=out)
    return Volume(out, v.spacing)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps with truncation radius ceil(3*sigma).

    Returned as float64 so the unit-sum property holds to 1e-6 and the
    separable pass matches a dense convolution oracle.
    """
    if sigma < 0:
        raise VolumeError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing of a raw 3D array, edge-replicated."""
    if sigma < 0:
        raise VolumeError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.array(data, copy=True)
    k = gaussian_kernel1d(sigma)
    out = np.asarray(data, dtype=np.float64)
    for axis in range(3):
        out = ndimage.correlate1d(out, k, axis=axis, mode="nearest")
    return out.astype(data.dtype, copy=False)


def gaussian_filter(v: Volume, sigma: float) -> Volume:
    """Blur a volume with an isotropic Gaussian of ``sigma`` voxels."""
    return Volume(gaussian_smooth(v.data, sigma), v.spacing)


def write_volume(path, v: Volume | LabelMask) -> None:
    """Serialize to the VXFORGE1 format (payload little-endian, x-fastest)."""
    if isinstance(v, Volume):
        tag, spacing = _TAG_VOLUME, v.spacing
        payload = v.data.astype("<f4", copy=False)
    elif isinstance(v, LabelMask):
        tag, spacing = _TAG_MASK, (1.0, 1.0, 1.0)
        payload = v.data
    else:
        raise TypeError(f"expected Volume or LabelMask, got {type(v).__name__}")
    header = _HEADER.pack(MAGIC, *v.dims, *spacing, tag)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes(order="F"))


def read_volume(path) -> Volume | LabelMask:
    """Read a VXFORGE1 file back into a Volume or LabelMask, bit-exactly."""
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise VolumeFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        magic, nx, ny, nz, sx, sy, sz, tag = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise VolumeFormatError(f"{path}: bad magic {magic!r}")
        if min(nx, ny, nz) < 1 or nx * ny * nz > _MAX_VOXELS:
            raise VolumeFormatError(f"{path}: dims ({nx}, {ny}, {nz}) out of range")
        if tag not in (_TAG_VOLUME, _TAG_MASK):
            raise VolumeFormatError(f"{path}: unknown dtype tag {tag}")
        dtype = np.dtype("<f4") if tag == _TAG_VOLUME else np.dtype("u1")
        expected = nx * ny * nz * dtype.itemsize
        payload = f.read(expected + 1)
    if len(payload) != expected:
        kind = "short" if len(payload) < expected else "oversized"
        raise VolumeFormatError(
            f"{path}: payload {kind} ({len(payload)} bytes, expected {expected})"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape((nx, ny, nz), order="F")
    if tag == _TAG_VOLUME:
        return Volume(data.astype(np.float32), (sx, sy, sz))
    return LabelMask(data.copy())
