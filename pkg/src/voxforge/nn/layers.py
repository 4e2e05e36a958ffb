"""Network definitions: a 3-level volumetric encoder-decoder for the
generator/segmentor roles and a small downsampling classifier, with
checkpoint serialization (JSON index + raw little-endian payload).
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..util import subseed
from .tensor import (
    Tensor,
    concat,
    conv3d,
    global_avg_pool,
    leaky_relu,
    sigmoid,
    upsample2,
)

LEAKY_SLOPE = 0.2

GENERATOR = "generator"
SEGMENTOR = "segmentor"
CLASSIFIER = "classifier"


class ShapeError(ValueError):
    """Input incompatible with a layer; message names the layer."""


class Conv3d:
    """3x3x3 convolution with zero padding 1 and stride 1 or 2."""

    def __init__(self, name: str, cin: int, cout: int, stride: int, rng, dtype):
        fan_in = cin * 27
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(cout, cin, 3, 3, 3)).astype(dtype)
        self.name = name
        self.stride = stride
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[0] != self.weight.data.shape[1]:
            raise ShapeError(
                f"layer {self.name}: expected {self.weight.data.shape[1]} input "
                f"channels, got {x.data.shape[0]}"
            )
        return conv3d(x, self.weight, self.bias, self.stride)

    def params(self) -> dict[str, Tensor]:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}


class Model:
    """Parameter store plus a forward function, tagged with its role."""

    def __init__(self, role: str, arch: dict, layers: list[Conv3d]):
        self.role = role
        self.arch = arch
        self._layers = layers
        self._params: dict[str, Tensor] = {}
        for layer in layers:
            self._params.update(layer.params())

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def params(self) -> dict[str, Tensor]:
        return self._params

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def set_trainable(self, flag: bool) -> None:
        for p in self._params.values():
            p.requires_grad = flag

    @property
    def trainable(self) -> bool:
        return any(p.requires_grad for p in self._params.values())

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self._params):
            h.update(self._params[name].data.tobytes())
        return h.hexdigest()


class UNet3d(Model):
    """3-level encoder-decoder with skip concatenation.

    Heads: ``linear`` for the generator (the synthesis transform applies
    tanh itself) and ``sigmoid`` for the segmentor's tumor probability.
    Spatial dims must be divisible by 4 so the two stride-2 stages invert
    cleanly under x2 nearest upsampling.
    """

    def __init__(
        self,
        role: str,
        in_channels: int = 1,
        widths: tuple[int, int, int] = (8, 16, 32),
        head: str = "linear",
        seed: int = 0,
        dtype=np.float32,
    ):
        if head not in ("linear", "sigmoid"):
            raise ValueError(f"unknown head {head!r}")
        w0, w1, w2 = widths
        rng = subseed("model-init", "unet3", role, seed)
        mk = lambda name, ci, co, s=1: Conv3d(name, ci, co, s, rng, dtype)
        layers = [
            mk("enc_in", in_channels, w0),
            mk("down0", w0, w1, 2),
            mk("enc1", w1, w1),
            mk("down1", w1, w2, 2),
            mk("bottom", w2, w2),
            mk("reduce1", w2, w1),
            mk("dec1", 2 * w1, w1),
            mk("reduce0", w1, w0),
            mk("dec0", 2 * w0, w0),
            mk("head", w0, 1),
        ]
        arch = {
            "kind": "unet3",
            "in_channels": in_channels,
            "widths": list(widths),
            "head": head,
        }
        super().__init__(role, arch, layers)
        (
            self.enc_in,
            self.down0,
            self.enc1,
            self.down1,
            self.bottom,
            self.reduce1,
            self.dec1,
            self.reduce0,
            self.dec0,
            self.head,
        ) = layers
        self.head_kind = head

    def forward(self, x: Tensor) -> Tensor:
        dims = x.data.shape[1:]
        if any(n % 4 for n in dims):
            raise ShapeError(f"layer enc_in: spatial dims {dims} must be divisible by 4")
        e0 = leaky_relu(self.enc_in(x), LEAKY_SLOPE)
        t = leaky_relu(self.down0(e0), LEAKY_SLOPE)
        e1 = leaky_relu(self.enc1(t), LEAKY_SLOPE)
        t = leaky_relu(self.down1(e1), LEAKY_SLOPE)
        t = leaky_relu(self.bottom(t), LEAKY_SLOPE)
        t = upsample2(leaky_relu(self.reduce1(t), LEAKY_SLOPE))
        t = leaky_relu(self.dec1(concat([t, e1])), LEAKY_SLOPE)
        t = upsample2(leaky_relu(self.reduce0(t), LEAKY_SLOPE))
        t = leaky_relu(self.dec0(concat([t, e0])), LEAKY_SLOPE)
        z = self.head(t)
        return sigmoid(z) if self.head_kind == "sigmoid" else z


class PatchClassifier(Model):
    """Three stride-2 convolutions and a pooled scalar logit."""

    def __init__(
        self,
        in_channels: int = 1,
        widths: tuple[int, int, int] = (8, 16, 32),
        seed: int = 0,
        dtype=np.float32,
    ):
        w0, w1, w2 = widths
        rng = subseed("model-init", "classifier", seed)
        layers = [
            Conv3d("cls0", in_channels, w0, 2, rng, dtype),
            Conv3d("cls1", w0, w1, 2, rng, dtype),
            Conv3d("cls2", w1, w2, 2, rng, dtype),
            Conv3d("cls_head", w2, 1, 1, rng, dtype),
        ]
        arch = {"kind": "classifier", "in_channels": in_channels, "widths": list(widths)}
        super().__init__(CLASSIFIER, arch, layers)
        self.stack = layers

    def forward(self, x: Tensor) -> Tensor:
        t = x
        for layer in self.stack[:-1]:
            t = leaky_relu(layer(t), LEAKY_SLOPE)
        return global_avg_pool(self.stack[-1](t))


def build_model(role: str, arch: dict, seed: int = 0) -> Model:
    if arch["kind"] == "unet3":
        return UNet3d(
            role,
            in_channels=arch["in_channels"],
            widths=tuple(arch["widths"]),
            head=arch["head"],
            seed=seed,
        )
    if arch["kind"] == "classifier":
        return PatchClassifier(
            in_channels=arch["in_channels"], widths=tuple(arch["widths"]), seed=seed
        )
    raise ValueError(f"unknown architecture kind {arch['kind']!r}")


def save_model(path, model: Model) -> None:
    names = sorted(model.params())
    index = {
        "role": model.role,
        "arch": model.arch,
        "params": [
            {"name": n, "shape": list(model.params()[n].data.shape)} for n in names
        ],
    }
    header = json.dumps(index, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for n in names:
            f.write(model.params()[n].data.astype("<f4", copy=False).tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        index = json.loads(f.read(hlen).decode())
        model = build_model(index["role"], index["arch"])
        for entry in index["params"]:
            shape = tuple(entry["shape"])
            n_bytes = int(np.prod(shape)) * 4
            buf = f.read(n_bytes)
            if len(buf) != n_bytes:
                raise ValueError(f"{path}: truncated parameter {entry['name']}")
            model.params()[entry["name"]].data = (
                np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)
            )
    return model
