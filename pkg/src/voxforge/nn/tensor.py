"""Reverse-mode automatic differentiation over dense numpy arrays.

Just enough machinery for small volumetric encoder-decoders: elementwise
arithmetic, the usual activations, 3D convolution (stride 1 or 2, zero pad
1), nearest-neighbor upsampling, channel concatenation, cropping, and
reductions.  Graphs are built eagerly per forward pass and freed once the
loss goes out of scope.

Arrays keep their dtype end to end; training runs float32, gradient-check
tests instantiate float64 models for a meaningful finite-difference
comparison.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

_GRAD_ENABLED = True

# im2col buffer cap; above this the 27-offset GEMM loop is cheaper
_COL_BYTES_LIMIT = 8 << 20


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate .grad on every reachable tensor that requires it."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    # operator sugar; scalars are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _node(data, parents, bwd) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce an upstream gradient back to a broadcast operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(a.data / b.data, (a, b), bwd)


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)

    def bwd(g):
        t._accum(g * (1.0 - y * y))

    return _node(y, (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    y = expit(t.data)

    def bwd(g):
        t._accum(g * y * (1.0 - y))

    return _node(y, (t,), bwd)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    pos = t.data > 0
    y = np.where(pos, t.data, slope * t.data)

    def bwd(g):
        t._accum(g * np.where(pos, 1.0, slope).astype(g.dtype))

    return _node(y, (t,), bwd)


def softplus(t: Tensor) -> Tensor:
    y = np.logaddexp(0.0, t.data)

    def bwd(g):
        t._accum(g * expit(t.data))

    return _node(y, (t,), bwd)


def log(t: Tensor) -> Tensor:
    def bwd(g):
        t._accum(g / t.data)

    return _node(np.log(t.data), (t,), bwd)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    inside = (t.data >= lo) & (t.data <= hi)

    def bwd(g):
        t._accum(g * inside)

    return _node(np.clip(t.data, lo, hi), (t,), bwd)


def tsum(t: Tensor) -> Tensor:
    def bwd(g):
        t._accum(np.broadcast_to(g, t.data.shape).copy())

    return _node(t.data.sum(), (t,), bwd)


def tmean(t: Tensor) -> Tensor:
    n = t.data.size

    def bwd(g):
        t._accum(np.broadcast_to(g / n, t.data.shape).copy())

    return _node(t.data.mean(), (t,), bwd)


def global_avg_pool(t: Tensor) -> Tensor:
    """Mean over the spatial axes of a (C, X, Y, Z) tensor -> (C,)."""
    c = t.data.shape[0]
    n = t.data.size // c

    def bwd(g):
        t._accum(np.broadcast_to(g.reshape(c, 1, 1, 1) / n, t.data.shape).copy())

    return _node(t.data.reshape(c, -1).mean(axis=1), (t,), bwd)


def concat(parts: list[Tensor]) -> Tensor:
    """Concatenate (C_i, X, Y, Z) tensors along the channel axis."""
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accum(g[lo:hi])

    return _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bwd)


def crop(t: Tensor, start: tuple[int, int, int], size: tuple[int, int, int]) -> Tensor:
    """Spatial sub-box of a (C, X, Y, Z) tensor; gradients scatter back."""
    x0, y0, z0 = start
    sx, sy, sz = size
    sl = (slice(None), slice(x0, x0 + sx), slice(y0, y0 + sy), slice(z0, z0 + sz))

    def bwd(g):
        full = np.zeros_like(t.data)
        full[sl] = g
        t._accum(full)

    return _node(t.data[sl].copy(), (t,), bwd)


def upsample2(t: Tensor) -> Tensor:
    """Nearest-neighbor x2 upsampling of a (C, X, Y, Z) tensor."""
    y = t.data.repeat(2, axis=1).repeat(2, axis=2).repeat(2, axis=3)

    def bwd(g):
        c, x2, y2, z2 = g.shape
        t._accum(
            g.reshape(c, x2 // 2, 2, y2 // 2, 2, z2 // 2, 2).sum(axis=(2, 4, 6))
        )

    return _node(y, (t,), bwd)


def _out_len(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


def _conv_fwd(xp: np.ndarray, wd: np.ndarray, stride: int) -> np.ndarray:
    """Correlation of a zero-padded (Ci, X+2, Y+2, Z+2) array with 3x3x3 taps."""
    ci = xp.shape[0]
    co = wd.shape[0]
    xo = _out_len(xp.shape[1] - 2, stride)
    yo = _out_len(xp.shape[2] - 2, stride)
    zo = _out_len(xp.shape[3] - 2, stride)
    n = xo * yo * zo
    if ci * 27 * n * xp.itemsize <= _COL_BYTES_LIMIT:
        win = sliding_window_view(xp, (3, 3, 3), axis=(1, 2, 3))
        win = win[:, ::stride, ::stride, ::stride]
        col = np.ascontiguousarray(win.transpose(0, 4, 5, 6, 1, 2, 3)).reshape(ci * 27, n)
        return (wd.reshape(co, -1) @ col).reshape(co, xo, yo, zo)
    y = np.zeros((co, xo, yo, zo), dtype=xp.dtype)
    for a in range(3):
        for b in range(3):
            for c in range(3):
                sl = xp[
                    :,
                    a : a + stride * (xo - 1) + 1 : stride,
                    b : b + stride * (yo - 1) + 1 : stride,
                    c : c + stride * (zo - 1) + 1 : stride,
                ]
                y += np.tensordot(wd[:, :, a, b, c], sl, axes=([1], [0]))
    return y


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """3D convolution, kernel 3, zero padding 1, stride 1 or 2.

    Shapes: x (Ci, X, Y, Z); w (Co, Ci, 3, 3, 3); b (Co,).
    """
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    xd, wd = x.data, w.data
    if xd.ndim != 4 or xd.shape[0] != wd.shape[1]:
        raise ValueError(
            f"conv3d input shape {xd.shape} does not match weight {wd.shape}"
        )
    xp = np.pad(xd, ((0, 0), (1, 1), (1, 1), (1, 1)))
    y = _conv_fwd(xp, wd, stride) + b.data.reshape(-1, 1, 1, 1)
    co = wd.shape[0]
    xo, yo, zo = y.shape[1:]

    def bwd(g):
        gy = g.reshape(co, -1)
        if b.requires_grad:
            b._accum(g.sum(axis=(1, 2, 3)))
        if w.requires_grad:
            dw = np.empty_like(wd)
            for a in range(3):
                for bb in range(3):
                    for c in range(3):
                        sl = xp[
                            :,
                            a : a + stride * (xo - 1) + 1 : stride,
                            bb : bb + stride * (yo - 1) + 1 : stride,
                            c : c + stride * (zo - 1) + 1 : stride,
                        ]
                        dw[:, :, a, bb, c] = gy @ sl.reshape(sl.shape[0], -1).T
            w._accum(dw)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for a in range(3):
                for bb in range(3):
                    for c in range(3):
                        contrib = (wd[:, :, a, bb, c].T @ gy).reshape(
                            xd.shape[0], xo, yo, zo
                        )
                        dxp[
                            :,
                            a : a + stride * (xo - 1) + 1 : stride,
                            bb : bb + stride * (yo - 1) + 1 : stride,
                            c : c + stride * (zo - 1) + 1 : stride,
                        ] += contrib
            x._accum(dxp[:, 1:-1, 1:-1, 1:-1])

    return _node(y, (x, w, b), bwd)
