import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxforge.volume import (
    LabelMask,
    Volume,
    VolumeError,
    VolumeFormatError,
    gaussian_filter,
    gaussian_kernel1d,
    normalize,
    read_volume,
    write_volume,
)


def dense_gaussian3d(data: np.ndarray, sigma: float) -> np.ndarray:
    """Oracle: direct (non-separable) 3D convolution with a full Gaussian
    kernel and edge replication, built straight from the definition."""
    r = math.ceil(3.0 * sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    k3 = k1[:, None, None] * k1[None, :, None] * k1[None, None, :]
    nx, ny, nz = data.shape
    d = data.astype(np.float64)
    out = np.zeros(data.shape, dtype=np.float64)
    for i in range(-r, r + 1):
        xi = np.clip(np.arange(nx) + i, 0, nx - 1)
        for j in range(-r, r + 1):
            yj = np.clip(np.arange(ny) + j, 0, ny - 1)
            for k in range(-r, r + 1):
                zk = np.clip(np.arange(nz) + k, 0, nz - 1)
                out += k3[i + r, j + r, k + r] * d[np.ix_(xi, yj, zk)]
    return out


class TestNormalize:
    def test_bounds_map_to_unit_interval(self):
        v = Volume(np.full((2, 2, 2), -100.0, dtype=np.float32))
        assert np.all(normalize(v, -100, 300).data == 0.0)
        v = Volume(np.full((2, 2, 2), 300.0, dtype=np.float32))
        assert np.all(normalize(v, -100, 300).data == 1.0)

    def test_midpoint_value(self):
        # (100 - (-100)) / 400 = 0.5
        v = Volume(np.full((3, 3, 3), 100.0, dtype=np.float32))
        assert np.allclose(normalize(v, -100, 300).data, 0.5)

    def test_clamps_outside_window(self):
        v = Volume(np.array([[[-500.0, 900.0]]], dtype=np.float32))
        out = normalize(v, -100, 300).data
        assert out[0, 0, 0] == 0.0 and out[0, 0, 1] == 1.0

    def test_invalid_window(self):
        v = Volume(np.zeros((2, 2, 2), dtype=np.float32))
        with pytest.raises(VolumeError):
            normalize(v, 300, -100)
        with pytest.raises(VolumeError):
            normalize(v, 5, 5)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_idempotent_on_unit_window(self, seed):
        rng = np.random.default_rng(seed)
        v = Volume(rng.random((4, 4, 4), dtype=np.float32))
        once = normalize(v, 0.0, 1.0)
        twice = normalize(once, 0.0, 1.0)
        assert np.array_equal(once.data, twice.data)

    def test_preserves_dims_and_spacing(self):
        v = Volume(np.zeros((3, 4, 5), dtype=np.float32), spacing=(1.0, 1.5, 2.0))
        out = normalize(v, 0, 1)
        assert out.dims == (3, 4, 5) and out.spacing == (1.0, 1.5, 2.0)


class TestGaussianFilter:
    @given(st.floats(min_value=1e-3, max_value=8.0, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_kernel_sums_to_one(self, sigma):
        k = gaussian_kernel1d(sigma)
        assert abs(k.sum() - 1.0) < 1e-6
        assert len(k) == 2 * math.ceil(3.0 * sigma) + 1

    def test_constant_volume_preserved(self):
        for sigma in (0.5, 1.0, 2.5):
            v = Volume(np.full((6, 6, 6), 0.37, dtype=np.float32))
            out = gaussian_filter(v, sigma)
            assert np.allclose(out.data, 0.37, atol=1e-6)

    def test_sigma_zero_is_identity(self):
        rng = np.random.default_rng(7)
        v = Volume(rng.random((5, 5, 5), dtype=np.float32))
        assert np.array_equal(gaussian_filter(v, 0.0).data, v.data)

    def test_negative_sigma_rejected(self):
        v = Volume(np.zeros((2, 2, 2), dtype=np.float32))
        with pytest.raises(VolumeError):
            gaussian_filter(v, -1.0)

    def test_impulse_center_weight(self):
        data = np.zeros((9, 9, 9), dtype=np.float32)
        data[4, 4, 4] = 1.0
        out = gaussian_filter(Volume(data), 1.0)
        k = gaussian_kernel1d(1.0)
        center = k[len(k) // 2]
        assert out.data[4, 4, 4] == pytest.approx(center**3, rel=1e-5)

    def test_impulse_matches_dense_oracle(self):
        data = np.zeros((9, 9, 9), dtype=np.float32)
        data[4, 4, 4] = 1.0
        out = gaussian_filter(Volume(data), 1.0)
        ref = dense_gaussian3d(data, 1.0)
        assert np.max(np.abs(out.data - ref)) < 1e-5

    @pytest.mark.parametrize("sigma", [0.6, 1.0, 1.7])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_separable_matches_dense_oracle(self, sigma, seed):
        rng = np.random.default_rng(seed)
        dims = tuple(rng.integers(5, 17, size=3))
        data = rng.random(dims, dtype=np.float32)
        out = gaussian_filter(Volume(data), sigma)
        ref = dense_gaussian3d(data, sigma)
        assert np.max(np.abs(out.data.astype(np.float64) - ref)) < 1e-5
        assert out.dims == dims


class TestVolumeFile:
    def test_volume_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        v = Volume(rng.random((4, 4, 4), dtype=np.float32), spacing=(0.7, 1.0, 2.5))
        path = tmp_path / "v.vxf"
        write_volume(path, v)
        back = read_volume(path)
        assert isinstance(back, Volume)
        assert back.data.tobytes() == v.data.tobytes()
        assert back.dims == v.dims
        assert back.spacing == pytest.approx(v.spacing)

    def test_mask_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        m = LabelMask(rng.integers(0, 3, size=(5, 3, 2)).astype(np.uint8))
        path = tmp_path / "m.vxf"
        write_volume(path, m)
        back = read_volume(path)
        assert isinstance(back, LabelMask)
        assert np.array_equal(back.data, m.data)

    def test_payload_byte_order_is_x_fastest(self, tmp_path):
        data = np.arange(8, dtype=np.float32).reshape((2, 2, 2))
        path = tmp_path / "o.vxf"
        write_volume(path, Volume(data))
        raw = path.read_bytes()
        payload = np.frombuffer(raw[-8 * 4 :], dtype="<f4")
        # index (x, y, z) flattened x-fastest: value at position x + 2y + 4z
        expected = [data[x, y, z] for z in range(2) for y in range(2) for x in range(2)]
        assert list(payload) == expected

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.vxf"
        write_volume(path, Volume(np.zeros((2, 2, 2), dtype=np.float32)))
        raw = bytearray(path.read_bytes())
        raw[:8] = b"BADMAGIC"
        path.write_bytes(bytes(raw))
        with pytest.raises(VolumeFormatError, match="magic"):
            read_volume(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.vxf"
        write_volume(path, Volume(np.zeros((2, 2, 2), dtype=np.float32)))
        raw = path.read_bytes()
        # header declares 2x2x2 but only 7 voxels of payload remain
        path.write_bytes(raw[: len(raw) - 4])
        with pytest.raises(VolumeFormatError, match="payload"):
            read_volume(path)

    def test_oversized_payload_rejected(self, tmp_path):
        path = tmp_path / "long.vxf"
        write_volume(path, Volume(np.zeros((2, 2, 2), dtype=np.float32)))
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(VolumeFormatError, match="payload"):
            read_volume(path)

    def test_dims_overflow_rejected(self, tmp_path):
        path = tmp_path / "huge.vxf"
        write_volume(path, Volume(np.zeros((2, 2, 2), dtype=np.float32)))
        raw = bytearray(path.read_bytes())
        raw[8:12] = (2**31 - 1).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(VolumeFormatError, match="dims"):
            read_volume(path)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "stub.vxf"
        path.write_bytes(b"VXFO")
        with pytest.raises(VolumeFormatError, match="header"):
            read_volume(path)


class TestTypes:
    def test_volume_requires_3d(self):
        with pytest.raises(VolumeError):
            Volume(np.zeros((2, 2), dtype=np.float32))

    def test_mask_rejects_foreign_labels(self):
        with pytest.raises(VolumeError):
            LabelMask(np.full((2, 2, 2), 7, dtype=np.uint8))

    def test_mask_count(self):
        m = LabelMask(np.array([[[0, 1], [2, 2]]], dtype=np.uint8))
        assert m.count(2) == 2 and m.count(0) == 1
