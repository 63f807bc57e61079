"""Dense float32 tensors with eager reverse-mode automatic differentiation.

Design notes, load-bearing:

* All data and all gradients are float32 numpy arrays. There is no dtype
  knob; evaluation code that needs float64 precision (the metrics) works on
  plain numpy outside this module.
* Graphs are built eagerly: every op returns a new Tensor holding references
  to its parents and a closure that maps the output gradient to parent
  gradients. ``backward()`` walks the graph once in reverse topological
  order. Per-pass gradients live in a side table and are added into ``.grad``
  at visit time, so calling ``backward()`` twice accumulates exactly instead
  of double-counting through interior nodes.
* Ties in max-style reductions route the gradient to the first index in
  row-major order (numpy argmax convention). Constant windows therefore send
  their whole gradient to the top-left cell.
* ``no_grad()`` disables graph construction globally; use it for inference.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError, NumericError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Context manager: ops executed inside build no graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_f32(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float32)


class Tensor:
    """A float32 array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_f32(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(
                f"item: tensor has {self.data.size} elements, expected 1"
            )
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values, no history, no grad requirement."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        head = f"Tensor(shape={self.shape}"
        if self.name:
            head += f", name={self.name!r}"
        if self.requires_grad:
            head += ", requires_grad=True"
        return head + ")"

    # -- graph plumbing ------------------------------------------------

    def _track(self, out_data, parents, vjp) -> "Tensor":
        out = Tensor(out_data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        return out

    def backward(self) -> None:
        """Reverse-mode pass from this scalar.

        Populates ``.grad`` (adding to any existing value) on every
        reachable tensor with ``requires_grad``.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward: loss must be a scalar, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        flows: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None:
                    continue
                if not (parent.requires_grad or parent._vjp is not None):
                    continue
                pid = id(parent)
                if pid in flows:
                    flows[pid] = flows[pid] + pg
                else:
                    flows[pid] = pg

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _coerce(other)
        def vjp(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return self._track(self.data + other.data, (self, other), vjp)

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        other = _coerce(other)
        a, b = self.data, other.data
        def vjp(g):
            return (_unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape))
        return self._track(a * b, (self, other), vjp)

    __rmul__ = __mul__

    def __sub__(self, other) -> "Tensor":
        other = _coerce(other)
        def vjp(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))
        return self._track(self.data - other.data, (self, other), vjp)

    def __rsub__(self, other) -> "Tensor":
        return _coerce(other).__sub__(self)

    def __truediv__(self, other) -> "Tensor":
        other = _coerce(other)
        a, b = self.data, other.data
        def vjp(g):
            return (
                _unbroadcast(g / b, self.shape),
                _unbroadcast(-g * a / (b * b), other.shape),
            )
        return self._track(a / b, (self, other), vjp)

    def __rtruediv__(self, other) -> "Tensor":
        return _coerce(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        return self._track(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, exponent) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise ContractError("pow: exponent must be a python scalar")
        c = float(exponent)
        a = self.data
        out = a ** np.float32(c)
        def vjp(g):
            return (g * np.float32(c) * a ** np.float32(c - 1.0),)
        return self._track(out, (self,), vjp)

    # -- elementwise functions ------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        def vjp(g):
            return (g * out_data,)
        return self._track(out_data, (self,), vjp)

    def log(self) -> "Tensor":
        a = self.data
        def vjp(g):
            return (g / a,)
        return self._track(np.log(a), (self,), vjp)

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        def vjp(g):
            return (g / (2.0 * out_data),)
        return self._track(out_data, (self,), vjp)

    def relu(self) -> "Tensor":
        a = self.data
        def vjp(g):
            return (g * (a > 0),)
        return self._track(np.maximum(a, 0), (self,), vjp)

    def sigmoid(self) -> "Tensor":
        # stable form: only ever exponentiates -|a|
        a = self.data
        e = np.exp(-np.abs(a))
        out_data = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(np.float32)
        def vjp(g):
            return (g * out_data * (1.0 - out_data),)
        return self._track(out_data, (self,), vjp)

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.shape
        def vjp(g):
            return (_spread(g, shape, axis, keepdims),)
        return self._track(out_data, (self,), vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.mean(axis=axis, keepdims=keepdims)
        shape = self.shape
        n = self.data.size // max(1, out_data.size)
        inv = np.float32(1.0 / max(1, n))
        def vjp(g):
            return (_spread(np.asarray(g) * inv, shape, axis, keepdims),)
        return self._track(out_data, (self,), vjp)

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        """Max reduction. Ties route the gradient to the first maximal index
        in row-major order."""
        if axis is None:
            flat = self.data.reshape(-1)
            idx = int(np.argmax(flat))
            out_data = np.array(flat[idx], dtype=np.float32)
            if keepdims:
                out_data = out_data.reshape((1,) * self.ndim)
            shape = self.shape
            def vjp(g):
                dx = np.zeros(flat.shape, dtype=np.float32)
                dx[idx] = np.asarray(g, dtype=np.float32).reshape(())
                return (dx.reshape(shape),)
            return self._track(out_data, (self,), vjp)

        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % self.ndim for a in axes)
        kept = tuple(i for i in range(self.ndim) if i not in axes)
        perm = kept + axes
        moved = self.data.transpose(perm)
        kept_shape = moved.shape[: len(kept)]
        red = int(np.prod([moved.shape[len(kept) + i] for i in range(len(axes))], dtype=np.int64)) if axes else 1
        flat = moved.reshape(kept_shape + (red,))
        idx = np.argmax(flat, axis=-1)
        out_flat = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        if keepdims:
            out_shape = tuple(1 if i in axes else s for i, s in enumerate(self.shape))
        else:
            out_shape = kept_shape
        out_data = out_flat.reshape(out_shape)
        moved_shape = moved.shape
        inv_perm = np.argsort(perm)
        def vjp(g):
            gflat = g.reshape(kept_shape)
            dx = np.zeros(flat.shape, dtype=np.float32)
            np.put_along_axis(dx, idx[..., None], gflat[..., None], axis=-1)
            return (dx.reshape(moved_shape).transpose(inv_perm),)
        return self._track(out_data, (self,), vjp)

    # -- shape ops -------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        def vjp(g):
            return (g.reshape(old),)
        return self._track(self.data.reshape(shape), (self,), vjp)

    def __getitem__(self, key) -> "Tensor":
        """Basic (numpy view-style) indexing with gradient scatter."""
        out_data = self.data[key]
        shape = self.shape
        def vjp(g):
            dx = np.zeros(shape, dtype=np.float32)
            dx[key] = g
            return (dx,)
        return self._track(out_data.copy(), (self,), vjp)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape).astype(np.float32, copy=False)


def _spread(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduction gradient back over the reduced axes."""
    g = np.asarray(g, dtype=np.float32)
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = sorted(a % len(shape) for a in axes)
        for a in axes:
            g = np.expand_dims(g, a)
    elif axis is None and not keepdims:
        g = g.reshape((1,) * len(shape))
    return np.broadcast_to(g, shape).astype(np.float32, copy=False)


# -- free-function spellings used all over the package -------------------

def relu(x: Tensor) -> Tensor:
    return _coerce(x).relu()


def sigmoid(x: Tensor) -> Tensor:
    return _coerce(x).sigmoid()


def backward(loss: Tensor) -> None:
    loss.backward()


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; gradient splits back at the seams."""
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ContractError("concat: need at least one tensor")
    ref = tensors[0]
    ax = axis % max(ref.ndim, 1)
    for i, t in enumerate(tensors[1:], start=1):
        if t.ndim != ref.ndim:
            raise DimensionError(
                f"concat: tensor {i} has rank {t.ndim}, expected {ref.ndim}"
            )
        for a in range(ref.ndim):
            if a != ax and t.shape[a] != ref.shape[a]:
                raise DimensionError(
                    f"concat: tensor {i} axis {a} has extent {t.shape[a]}, "
                    f"expected {ref.shape[a]}"
                )
    out_data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=ax))
    out = Tensor(out_data)
    if _grad_enabled and any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        out._vjp = vjp
    return out


def softmax2d(x: Tensor, beta: float = 1.0) -> Tensor:
    """Softmax over the spatial plane of each channel, scaled by ``beta``.

    Accepts [H,W], [C,H,W] or [B,C,H,W]; the plane is always the trailing
    two axes. Shift-by-max keeps the exponentials bounded for any finite
    input. Raises NumericError on non-finite input, ContractError on
    beta <= 0.
    """
    x = _coerce(x)
    if x.ndim < 2:
        raise DimensionError(f"softmax2d: need at least 2 axes, got {x.ndim}")
    if not np.isfinite(x.data).all():
        raise NumericError("softmax2d: input contains non-finite values")
    beta = float(beta)
    if beta <= 0:
        raise ContractError(f"softmax2d: beta must be > 0, got {beta}")
    z = np.float32(beta) * x.data
    z = z - z.max(axis=(-2, -1), keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=(-2, -1), keepdims=True)
    def vjp(g):
        inner = (g * p).sum(axis=(-2, -1), keepdims=True)
        return (np.float32(beta) * p * (g - inner),)
    return x._track(p, (x,), vjp)


class ConvLayer:
    """2-D convolution parameters: weight [out_ch, in_ch, kh, kw], bias
    [out_ch], plus integer stride and symmetric zero padding.

    Convolution here is cross-correlation (no kernel flip), the standard
    deep-learning convention.
    """

    def __init__(self, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0):
        if weight.ndim != 4:
            raise DimensionError(
                f"ConvLayer: weight must have 4 axes, got {weight.ndim}"
            )
        if bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
            raise DimensionError(
                f"ConvLayer: bias shape {bias.shape} does not match "
                f"out_channels {weight.shape[0]} on axis 0"
            )
        if int(stride) < 1:
            raise ConfigError(f"ConvLayer: stride must be >= 1, got {stride}")
        if int(padding) < 0:
            raise ConfigError(f"ConvLayer: padding must be >= 0, got {padding}")
        self.weight = weight
        self.bias = bias
        self.stride = int(stride)
        self.padding = int(padding)

    @classmethod
    def init(cls, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
             stride: int = 1, padding: int = 0) -> "ConvLayer":
        """Kaiming-uniform fan-in init (bound sqrt(6/fan_in)), zero bias."""
        fan_in = in_ch * kernel * kernel
        bound = float(np.sqrt(6.0 / fan_in))
        w = rng.uniform(-bound, bound, size=(out_ch, in_ch, kernel, kernel))
        return cls(
            Tensor(w.astype(np.float32), requires_grad=True),
            Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True),
            stride=stride,
            padding=padding,
        )

    def out_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.weight.shape[2], self.weight.shape[3]
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return oh, ow

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self)


def conv2d(x: Tensor, layer: ConvLayer) -> Tensor:
    """Batched 2-D cross-correlation via im2col + matmul.

    x: [B, C, H, W]. Output: [B, out_ch, OH, OW] with
    OH = (H + 2p - kh)//s + 1.
    """
    x = _coerce(x)
    if x.ndim != 4:
        raise DimensionError(f"conv2d: input must have 4 axes [B,C,H,W], got {x.ndim}")
    b, c, h, w = x.shape
    out_ch, in_ch, kh, kw = layer.weight.shape
    if c != in_ch:
        raise DimensionError(
            f"conv2d: input axis 1 has {c} channels, layer expects {in_ch}"
        )
    s, p = layer.stride, layer.padding
    if h + 2 * p < kh or w + 2 * p < kw:
        raise DimensionError(
            f"conv2d: padded input {h + 2 * p}x{w + 2 * p} smaller than kernel {kh}x{kw}"
        )
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    # [B, C, OH, OW, kh, kw] -> [B, OH*OW, C*kh*kw]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, oh * ow, c * kh * kw)
    wmat = layer.weight.data.reshape(out_ch, -1)
    out = cols @ wmat.T + layer.bias.data
    out_data = np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, out_ch, oh, ow)

    ph, pw = h + 2 * p, w + 2 * p

    def vjp(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b, oh * ow, out_ch)
        db = gmat.sum(axis=(0, 1))
        dw = np.tensordot(gmat, cols, axes=([0, 1], [0, 1])).reshape(layer.weight.shape)
        dcols = (gmat @ wmat).reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros((b, c, ph, pw), dtype=np.float32)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, :, ki:ki + s * oh:s, kj:kj + s * ow:s] += dcols[:, :, :, :, ki, kj]
        dx = dxp[:, :, p:p + h, p:p + w] if p else dxp
        return (np.ascontiguousarray(dx), dw, db)

    out_t = Tensor(out_data)
    if _grad_enabled and (x.requires_grad or layer.weight.requires_grad or layer.bias.requires_grad):
        out_t.requires_grad = True
        out_t._parents = (x, layer.weight, layer.bias)
        out_t._vjp = vjp
    return out_t


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2. Requires even spatial extents.

    The gradient routes entirely to the argmax cell of each window; when a
    window is constant, the first cell in row-major order (top-left) wins.
    """
    x = _coerce(x)
    if x.ndim != 4:
        raise DimensionError(f"maxpool2: input must have 4 axes [B,C,H,W], got {x.ndim}")
    b, c, h, w = x.shape
    if h % 2:
        raise DimensionError(f"maxpool2: axis 2 extent {h} is odd")
    if w % 2:
        raise DimensionError(f"maxpool2: axis 3 extent {w} is odd")
    oh, ow = h // 2, w // 2
    win = x.data.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
    idx = np.argmax(win, axis=-1)
    out_data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        dwin = np.zeros(win.shape, dtype=np.float32)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        return (
            dwin.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w).copy(),
        )

    return x._track(np.ascontiguousarray(out_data), (x,), vjp)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling. The gradient of each input cell is
    the sum over its four replicated output cells."""
    x = _coerce(x)
    if x.ndim != 4:
        raise DimensionError(f"upsample2: input must have 4 axes [B,C,H,W], got {x.ndim}")
    b, c, h, w = x.shape
    out_data = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def vjp(g):
        return (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return x._track(out_data, (x,), vjp)
