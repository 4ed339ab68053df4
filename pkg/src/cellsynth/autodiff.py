"""Reverse-mode automatic differentiation over numpy arrays.

Tape-based engine: every operation wraps its result in a Tensor that
remembers its inputs and a closure mapping the output gradient to
input gradients.  Only the operations required by the models in this
package are implemented.  Layout for image tensors is NCHW.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # operator sugar; implementations below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_coerce(other), -1.0))

    def __rsub__(self, other):
        return add(_coerce(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor) or isinstance(other, np.ndarray):
            raise TypeError("division only supported by python scalars")
        return mul(self, 1.0 / float(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def backward(self, seed: np.ndarray | None = None) -> None:
        backward(self, seed)


def parameter(data) -> Tensor:
    """Leaf tensor that accumulates gradients."""
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data) -> Tensor:
    """Leaf tensor excluded from differentiation."""
    return Tensor(np.asarray(data), requires_grad=False)


def _coerce(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # collapse numpy broadcasting: sum over the axes that were expanded
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(root: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate gradients of `root` into every reachable leaf.

    `seed` defaults to ones, which for a scalar loss is d(loss)/d(loss).
    """
    if not root.requires_grad:
        raise ValueError("backward() on a tensor that requires no grad")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    if seed is None:
        seed = np.ones_like(root.data)
    root.grad = np.asarray(seed, dtype=root.data.dtype)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# elementwise and reduction ops

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def back(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), back)


def power(a, exponent: float) -> Tensor:
    a = _coerce(a)
    k = float(exponent)
    out = a.data ** k

    def back(g):
        return (g * k * a.data ** (k - 1.0),)

    return _node(out, (a,), back)


def log(a) -> Tensor:
    a = _coerce(a)
    out = np.log(a.data)

    def back(g):
        return (g / a.data,)

    return _node(out, (a,), back)


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def back(g):
        return (g * out,)

    return _node(out, (a,), back)


def absolute(a) -> Tensor:
    a = _coerce(a)
    out = np.abs(a.data)

    def back(g):
        # subgradient 0 at exactly 0
        return (g * np.sign(a.data),)

    return _node(out, (a,), back)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where unclamped."""
    a = _coerce(a)
    out = np.clip(a.data, lo, hi)

    def back(g):
        inside = ((a.data >= lo) & (a.data <= hi)).astype(g.dtype)
        return (g * inside,)

    return _node(out, (a,), back)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-|z|) never overflows; pick the matching closed form per sign
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    s = _stable_sigmoid(a.data)

    def back(g):
        return (g * s * (1.0 - s),)

    return _node(s, (a,), back)


def silu(a) -> Tensor:
    """x * sigmoid(x), the nonlinearity used by the models here."""
    a = _coerce(a)
    s = _stable_sigmoid(a.data)
    out = a.data * s

    def back(g):
        return (g * (s + a.data * s * (1.0 - s)),)

    return _node(out, (a,), back)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),)
        gk = g
        if not keepdims:
            gk = np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.data.shape).astype(a.data.dtype, copy=True),)

    return _node(out, (a,), back)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    out = a.data.reshape(shape)

    def back(g):
        return (g.reshape(a.data.shape),)

    return _node(out, (a,), back)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, (a, b), back)


# ---------------------------------------------------------------------------
# image ops (NCHW)

def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with OIHW weights."""
    x, w = _coerce(x), _coerce(w)
    xd, wd = x.data, w.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError("conv2d expects NCHW input and OIHW weights")
    n, cin, hin, win = xd.shape
    cout, cw, kh, kw = wd.shape
    if cw != cin:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, weight {cw}")
    s, p = int(stride), int(padding)
    hout = (hin + 2 * p - kh) // s + 1
    wout = (win + 2 * p - kw) // s + 1
    if hout < 1 or wout < 1:
        raise ShapeError("conv2d kernel larger than padded input")

    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    cols = np.empty((n, cin, kh, kw, hout, wout), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + s * hout:s, j:j + s * wout:s]
    colsf = cols.reshape(n, cin * kh * kw, hout * wout)
    wf = wd.reshape(cout, cin * kh * kw)
    out = np.matmul(wf[None], colsf).reshape(n, cout, hout, wout)

    parents = [x, w]
    if b is not None:
        b = _coerce(b)
        if b.data.shape != (cout,):
            raise ShapeError("conv2d bias must have one value per output channel")
        out = out + b.data.reshape(1, cout, 1, 1)
        parents.append(b)

    def back(g):
        lout = hout * wout
        gf = g.reshape(n, cout, lout)
        # fold the batch into the gemm columns so BLAS does the contraction
        gf_flat = gf.transpose(1, 0, 2).reshape(cout, n * lout)
        cols_flat = colsf.transpose(1, 0, 2).reshape(cin * kh * kw, n * lout)
        gw = (gf_flat @ cols_flat.T).reshape(wd.shape)
        dcols = (wf.T @ gf_flat).reshape(cin * kh * kw, n, lout)
        dcols = dcols.transpose(1, 0, 2).reshape(n, cin, kh, kw, hout, wout)
        hp, wp = hin + 2 * p, win + 2 * p
        dxp = np.zeros((n, cin, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + s * hout:s, j:j + s * wout:s] += dcols[:, :, i, j]
        gx = dxp[:, :, p:p + hin, p:p + win] if p else dxp
        if b is not None:
            return gx, gw, g.sum(axis=(0, 2, 3))
        return gx, gw

    return _node(out, tuple(parents), back)


def avg_pool2x(x) -> Tensor:
    """2x2 average pooling, stride 2; sides must be even."""
    x = _coerce(x)
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2x needs even sides, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def back(g):
        gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
        return (gx.astype(x.data.dtype, copy=False),)

    return _node(out, (x,), back)


def upsample2x(x) -> Tensor:
    """Nearest-neighbor 2x upsampling."""
    x = _coerce(x)
    n, c, h, w = x.data.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def back(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _node(out, (x,), back)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    parts = [_coerce(p) for p in parts]
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)

    def back(g):
        grads = []
        start = 0
        for width in widths:
            grads.append(g[:, start:start + width])
            start += width
        return tuple(grads)

    return _node(out, tuple(parts), back)
