"""Dense float tensors with reverse-mode automatic differentiation.

The op set is exactly what the two-branch fusion network needs: 3x3
same-padding convolution, batch normalization, ReLU, 2x2 max pooling,
bias-free linear maps, row softmax, element-wise binary cross-entropy,
and structural glue (add, scale, mul, elem_max, concat, reshape, sum).

Everything is plain NumPy. Training runs in float32; the same ops accept
float64 tensors so numerical checks can run at higher precision.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "ShapeError",
    "GraphConsumedError",
    "RunningStats",
    "no_grad",
    "add",
    "scale",
    "mul",
    "elem_max",
    "concat",
    "reshape",
    "tensor_sum",
    "relu",
    "linear",
    "softmax",
    "bce_loss",
    "conv2d_same",
    "batch_norm2d",
    "max_pool2",
]

_FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class GraphConsumedError(RuntimeError):
    """backward() was called on a graph that has already been walked."""


class no_grad:
    """Disable graph recording inside a ``with`` block (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A dense float array plus an optional same-shape gradient buffer.

    Leaves are created directly; the ops in this module return fresh
    tensors wired into a computation graph. ``backward()`` on a scalar
    result accumulates gradients into every reachable tensor that has
    ``requires_grad`` set. A graph can be walked exactly once.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOAT_TYPES else np.float32
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into the whole graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        if self._consumed:
            raise GraphConsumedError("this graph has already been walked")
        if self._backward is None:
            raise RuntimeError("backward() on a tensor that is not the result of an op")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
                node._consumed = True
                # release the closure so the graph cannot be walked again
                node._backward = None
                node._parents = ()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data, inputs, backward) -> Tensor:
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(t for t in inputs if t.requires_grad)
        out._backward = backward
        return out
    return Tensor(data)


# ---------------------------------------------------------------------------
# element-wise and structural ops


def add(a, b) -> Tensor:
    """Element-wise sum of two same-shape tensors."""
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), backward)


def scale(a, s: float) -> Tensor:
    """Multiply a tensor by a Python scalar."""
    a = _tensor(a)
    s = float(s)

    def backward(g):
        _accum(a, g * s)

    return _result(a.data * s, (a,), backward)


def mul(a, b) -> Tensor:
    """Element-wise product of two same-shape tensors."""
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def elem_max(a, b) -> Tensor:
    """Element-wise maximum; exact ties split the gradient evenly."""
    a, b = _tensor(a), _tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"elem_max: shapes {a.shape} and {b.shape} differ")
    tie = (a.data == b.data)
    wa = (a.data > b.data).astype(a.dtype) + 0.5 * tie
    wb = (b.data > a.data).astype(b.dtype) + 0.5 * tie

    def backward(g):
        _accum(a, g * wa)
        _accum(b, g * wb)

    return _result(np.maximum(a.data, b.data), (a, b), backward)


def concat(a, b, axis: int = -1) -> Tensor:
    """Concatenate two tensors along ``axis`` (the feature axis by default)."""
    a, b = _tensor(a), _tensor(b)
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: ranks {a.ndim} and {b.ndim} differ")
    ax = axis % a.ndim if a.ndim else 0
    for d in range(a.ndim):
        if d != ax and a.shape[d] != b.shape[d]:
            raise ShapeError(f"concat: shapes {a.shape} and {b.shape} differ off-axis")
    split = a.shape[ax]

    def backward(g):
        ga, gb = np.split(g, [split], axis=ax)
        _accum(a, ga)
        _accum(b, gb)

    return _result(np.concatenate([a.data, b.data], axis=ax), (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = _tensor(a)
    out = a.data.reshape(shape).copy()

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _result(out, (a,), backward)


def tensor_sum(a) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    a = _tensor(a)

    def backward(g):
        _accum(a, np.broadcast_to(g, a.shape))

    return _result(a.data.sum(dtype=a.dtype), (a,), backward)


# ---------------------------------------------------------------------------
# network ops


def relu(a) -> Tensor:
    """max(x, 0); the subgradient at 0 is 0."""
    a = _tensor(a)
    mask = a.data > 0

    def backward(g):
        _accum(a, g * mask)

    return _result(a.data * mask, (a,), backward)


def linear(x, w) -> Tensor:
    """Bias-free affine map: rows of ``x`` (N, D) against ``w`` (C, D)."""
    x, w = _tensor(x), _tensor(w)
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError("linear expects 2-d input and weight")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[1]} != weight width {w.shape[1]}")

    def backward(g):
        _accum(x, g @ w.data)
        _accum(w, g.T @ x.data)

    return _result(x.data @ w.data.T, (x, w), backward)


def softmax(x) -> Tensor:
    """Row softmax with max subtraction for overflow safety."""
    x = _tensor(x)
    if x.ndim != 2:
        raise ShapeError("softmax expects a 2-d tensor of rows")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=1, keepdims=True)
        _accum(x, y * (g - inner))

    return _result(y, (x,), backward)


def bce_loss(pred, target, eps: float = 1e-7) -> Tensor:
    """Mean over samples of the per-output binary cross-entropy.

    ``pred`` holds probabilities in (0, 1); rows of ``target`` are one-hot.
    Predictions are clamped to [eps, 1 - eps] before the logs, and the
    gradient is zero where the clamp is active.
    """
    pred = _tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if pred.shape != t.shape:
        raise ShapeError(f"bce_loss: pred {pred.shape} vs target {t.shape}")
    n = pred.shape[0] if pred.ndim else 1
    p = np.clip(pred.data, eps, 1.0 - eps)
    inside = (pred.data > eps) & (pred.data < 1.0 - eps)
    val = -(t * np.log(p) + (1.0 - t) * np.log1p(-p)).sum(dtype=pred.dtype) / n

    def backward(g):
        gp = -(t / p - (1.0 - t) / (1.0 - p)) / n
        _accum(pred, g * gp * inside)

    return _result(np.asarray(val, dtype=pred.dtype), (pred,), backward)


def conv2d_same(x, w, bias=None) -> Tensor:
    """3x3 convolution with zero padding 1 and stride 1 (output size == input size).

    ``x`` is (N, C_in, H, W), ``w`` is (C_out, C_in, 3, 3), ``bias`` is
    (C_out,) or None. Implemented as im2col + matmul.
    """
    x, w = _tensor(x), _tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d_same expects 4-d input and weight")
    if w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d_same supports 3x3 kernels only, got {w.shape[2:]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d_same: input channels {x.shape[1]} != kernel channels {w.shape[1]}")
    n, cin, h, wd = x.shape
    if h < 1 or wd < 1:
        raise ShapeError("conv2d_same needs spatial extents >= 1")
    cout = w.shape[0]
    if bias is not None:
        bias = _tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d_same: bias shape {bias.shape} != ({cout},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, cin, h, wd, 3, 3)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, cin * 9)
    wmat = w.data.reshape(cout, cin * 9)
    out = (cols @ wmat.T).reshape(n, h, wd, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    inputs = (x, w) if bias is None else (x, w, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * h * wd, cout)
        if w.requires_grad:
            _accum(w, (gm.T @ cols).reshape(w.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = gm @ wmat
            dgrid = dcols.reshape(n, h, wd, cin, 3, 3)
            dxp = np.zeros((n, cin, h + 2, wd + 2), dtype=g.dtype)
            for i in range(3):
                for j in range(3):
                    dxp[:, :, i:i + h, j:j + wd] += dgrid[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            _accum(x, dxp[:, :, 1:1 + h, 1:1 + wd])

    return _result(np.ascontiguousarray(out), inputs, backward)


class RunningStats:
    """Per-channel running mean/variance used by batch norm at inference."""

    __slots__ = ("mean", "var")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batch_norm2d(x, gamma, beta, stats: RunningStats, training: bool,
                 momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over the N, H, W axes.

    Training mode normalizes with the batch statistics (population
    variance) and nudges ``stats`` by ``momentum`` toward them; inference
    mode normalizes with ``stats`` as-is.
    """
    x, gamma, beta = _tensor(x), _tensor(gamma), _tensor(beta)
    if x.ndim != 4:
        raise ShapeError("batch_norm2d expects a 4-d tensor")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError("batch_norm2d: gamma/beta must be per-channel vectors")
    if training:
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            raise ShapeError("batch_norm2d training mode needs >= 2 values per channel")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        stats.mean += momentum * (mu - stats.mean)
        stats.var += momentum * (var - stats.var)
    else:
        mu = stats.mean.astype(x.dtype)
        var = stats.var.astype(x.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        axes = (0, 2, 3)
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=axes))
        if x.requires_grad:
            gx = g * gamma.data[None, :, None, None]
            if training:
                mean_gx = gx.mean(axis=axes, keepdims=True)
                mean_gx_xhat = (gx * xhat).mean(axis=axes, keepdims=True)
                dx = inv[None, :, None, None] * (gx - mean_gx - xhat * mean_gx_xhat)
            else:
                dx = gx * inv[None, :, None, None]
            _accum(x, dx)

    return _result(out, (x, gamma, beta), backward)


def max_pool2(x) -> Tensor:
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped.

    The gradient routes to the first maximal element of each window in
    row-major scan order.
    """
    x = _tensor(x)
    if x.ndim != 4:
        raise ShapeError("max_pool2 expects a 4-d tensor")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"max_pool2 needs spatial extents >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    xc = x.data[:, :, :h2 * 2, :w2 * 2]
    win = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    am = win.argmax(axis=4)
    out = np.take_along_axis(win, am[..., None], axis=4)[..., 0]

    def backward(g):
        dwin = np.zeros((n, c, h2, w2, 4), dtype=g.dtype)
        np.put_along_axis(dwin, am[..., None], g[..., None], axis=4)
        dxc = dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        if (h2 * 2, w2 * 2) == (h, w):
            _accum(x, dxc)
        else:
            dx = np.zeros((n, c, h, w), dtype=g.dtype)
            dx[:, :, :h2 * 2, :w2 * 2] = dxc
            _accum(x, dx)

    return _result(np.ascontiguousarray(out), (x,), backward)
