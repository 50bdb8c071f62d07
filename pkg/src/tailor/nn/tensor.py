"""Dense-tensor reverse-mode autodiff engine.

Tensors wrap numpy arrays (f32 by default, f64 for gradient checks).
Every differentiable op records its parents and a backward rule on the
output tensor; ``backprop`` walks the resulting graph in reverse
topological order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class NonScalarLoss(ValueError):
    """Raised when backprop is started from a non-scalar tensor."""


def _as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "backward_rule", "name")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), backward_rule: Callable | None = None,
                 name: str = ""):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.parents = parents
        self.backward_rule = backward_rule
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        backprop(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # Operator sugar used throughout the model code.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_ensure_tensor(other), -1.0))

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def parameter(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


_GRAD_ENABLED = True


class no_grad:
    """Context manager: skip graph recording (inference paths)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _needs_graph(*tensors: Tensor) -> bool:
    return _GRAD_ENABLED and any(t.requires_grad or t.backward_rule is not None for t in tensors)


def _make(data: np.ndarray, op: str, parents: tuple, rule: Callable | None) -> Tensor:
    if _needs_graph(*parents):
        return Tensor(data, requires_grad=False, op=op, parents=parents, backward_rule=rule)
    return Tensor(data, op=op)


@dataclass
class Graph:
    """Topologically ordered view of the graph reachable from a root."""

    nodes: list

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return cls(order)


def backprop(loss: Tensor, params: Sequence[Tensor] | None = None):
    """Accumulate gradients of ``loss`` into every reachable tensor.

    Returns the gradient arrays for ``params`` when given, in order.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    graph = Graph.trace(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node.backward_rule is None or node.grad is None:
            continue
        node.backward_rule(node.grad)
    if params is not None:
        missing = [p for p in params if p.grad is None]
        if missing:
            raise ValueError(f"{len(missing)} parameter(s) unreachable from the loss")
        return [p.grad for p in params]
    return None


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _ensure_tensor(a), _ensure_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def rule(g):
        if a.requires_grad or a.backward_rule is not None:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad or b.backward_rule is not None:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out, "add", (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = _ensure_tensor(a), _ensure_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def rule(g):
        if a.requires_grad or a.backward_rule is not None:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad or b.backward_rule is not None:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out, "mul", (a, b), rule)


def scale(a, c: float) -> Tensor:
    a = _ensure_tensor(a)
    c = float(c)
    out = a.data * a.dtype.type(c)

    def rule(g):
        a._accumulate(g * a.dtype.type(c))

    return _make(out, "scale", (a,), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _ensure_tensor(a), _ensure_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def rule(g):
        if a.requires_grad or a.backward_rule is not None:
            a._accumulate(g @ b.data.T)
        if b.requires_grad or b.backward_rule is not None:
            b._accumulate(a.data.T @ g)

    return _make(out, "matmul", (a, b), rule)


def reshape(a: Tensor, shape) -> Tensor:
    a = _ensure_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None

    def rule(g):
        a._accumulate(g.reshape(a.shape))

    return _make(out, "reshape", (a,), rule)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_ensure_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} on axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        parts = np.split(g, splits, axis=axis)
        for t, part in zip(tensors, parts):
            if t.requires_grad or t.backward_rule is not None:
                t._accumulate(part)

    return _make(out, "concat", tuple(tensors), rule)


def relu(a: Tensor) -> Tensor:
    a = _ensure_tensor(a)
    out = np.maximum(a.data, 0)

    def rule(g):
        a._accumulate(g * (a.data > 0))

    return _make(out, "relu", (a,), rule)


def sigmoid(a: Tensor) -> Tensor:
    a = _ensure_tensor(a)
    out = _sigmoid(a.data)

    def rule(g):
        a._accumulate(g * out * (1 - out))

    return _make(out, "sigmoid", (a,), rule)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # clipping avoids overflow in exp; saturation is exact past +-40 anyway
    return 1.0 / (1.0 + np.exp(-np.clip(x, -40.0, 40.0)))


def silu(a: Tensor) -> Tensor:
    a = _ensure_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s

    def rule(g):
        a._accumulate(g * (s + a.data * s * (1 - s)))

    return _make(out, "silu", (a,), rule)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def rule(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).astype(a.dtype))

    return _make(out, "sum", (a,), rule)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _ensure_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])

    def rule(g):
        g = np.asarray(g) / a.dtype.type(n)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).astype(a.dtype))

    return _make(out, "mean", (a,), rule)


def embedding(table: Tensor, idx) -> Tensor:
    table = _ensure_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding: index must be 1-D, got {idx.shape}")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    out = table.data[idx]

    def rule(g):
        dt = np.zeros_like(table.data)
        np.add.at(dt, idx, g)
        table._accumulate(dt)

    return _make(out, "embedding", (table,), rule)


def mse(pred: Tensor, target) -> Tensor:
    pred = _ensure_tensor(pred)
    tgt = target.data if isinstance(target, Tensor) else _as_array(target, pred.dtype)
    if pred.shape != tgt.shape:
        raise ShapeError(f"mse: shapes {pred.shape} and {tgt.shape} differ")
    diff = pred.data - tgt
    out = np.asarray((diff * diff).mean(), dtype=pred.dtype)

    def rule(g):
        pred._accumulate(g * 2.0 * diff / pred.dtype.type(diff.size))

    return _make(out, "mse", (pred,), rule)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    logits = _ensure_tensor(logits)
    z = targets.data if isinstance(targets, Tensor) else _as_array(targets, logits.dtype)
    if logits.shape != z.shape:
        raise ShapeError(f"bce_with_logits: shapes {logits.shape} and {z.shape} differ")
    x = logits.data
    # stable form: max(x, 0) - x*z + log(1 + exp(-|x|))
    out = np.asarray((np.maximum(x, 0) - x * z + np.log1p(np.exp(-np.abs(x)))).mean(),
                     dtype=logits.dtype)

    def rule(g):
        logits._accumulate(g * (_sigmoid(x) - z) / logits.dtype.type(x.size))

    return _make(out, "bce_with_logits", (logits,), rule)


# ---------------------------------------------------------------------------
# convolution family (im2col / col2im based; adjoint pairs share indexing)
# ---------------------------------------------------------------------------

def _pad_amount(kh: int, kw: int, padding: str) -> tuple[int, int]:
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"same padding needs odd kernel, got {(kh, kw)}")
        return kh // 2, kw // 2
    if padding == "valid":
        return 0, 0
    raise ValueError(f"unknown padding {padding!r}")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B,C,Hp,Wp) -> (B, C*kh*kw, OH*OW)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, OH, OW, kh, kw)
    b, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, oh * ow)
    return np.ascontiguousarray(cols)


def _col2im(cols: np.ndarray, xp_shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back to (B,C,Hp,Wp)."""
    b, c, hp, wp = xp_shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    out = np.zeros(xp_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return out


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D correlation. x: (B,C,H,W), w: (O,C,kh,kw) -> (B,O,OH,OW)."""
    x, w = _ensure_tensor(x), _ensure_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: need 4-D input/kernel, got {x.shape} and {w.shape}")
    o, c, kh, kw = w.shape
    if x.shape[1] != c:
        raise ShapeError(f"conv2d: input channels {x.shape[1]} != kernel channels {c}")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    ph, pw = _pad_amount(kh, kw, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    b = x.shape[0]
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < kh or wp < kw:
        raise ShapeError(f"conv2d: kernel {(kh, kw)} larger than padded input {(hp, wp)}")
    cols = _im2col(xp, kh, kw, stride)                       # (B, C*kh*kw, L)
    wmat = w.data.reshape(o, c * kh * kw)
    out = np.matmul(wmat, cols)                              # (B, O, L) via broadcast
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    out = out.reshape(b, o, oh, ow)

    def rule(g):
        gflat = g.reshape(b, o, oh * ow)
        if w.requires_grad or w.backward_rule is not None:
            dw = np.matmul(gflat, cols.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.shape))
        if x.requires_grad or x.backward_rule is not None:
            dcols = np.matmul(wmat.T, gflat)
            dxp = _col2im(dcols, xp.shape, kh, kw, stride)
            if ph or pw:
                dxp = dxp[:, :, ph:hp - ph, pw:wp - pw]
            x._accumulate(dxp)

    return _make(out, "conv2d", (x, w), rule)


def conv_transpose2d(x: Tensor, w: Tensor, stride: int = 2, output_padding: int = 0,
                     padding: int = 1) -> Tensor:
    """Transposed 2-D convolution (exact adjoint of strided correlation).

    x: (B,Cin,H,W), w: (Cin,Cout,kh,kw) -> (B,Cout,(H-1)*stride-2*padding+kh+output_padding,...)
    """
    x, w = _ensure_tensor(x), _ensure_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d: need 4-D input/kernel, got {x.shape} and {w.shape}")
    cin, cout, kh, kw = w.shape
    if x.shape[1] != cin:
        raise ShapeError(f"conv_transpose2d: input channels {x.shape[1]} != kernel {cin}")
    b, _, h, wd = x.shape
    oh = (h - 1) * stride - 2 * padding + kh + output_padding
    ow = (wd - 1) * stride - 2 * padding + kw + output_padding
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"conv_transpose2d: non-positive output size {(oh, ow)}")
    hp, wp = oh + 2 * padding, ow + 2 * padding
    wmat = w.data.reshape(cin, cout * kh * kw)
    xflat = x.data.reshape(b, cin, h * wd)
    cols = np.matmul(wmat.T, xflat)                          # (B, Cout*kh*kw, H*W)
    full = _col2im(cols, (b, cout, hp, wp), kh, kw, stride)
    out = full[:, :, padding:hp - padding, padding:wp - padding] if padding else full

    def rule(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        gcols = _im2col(gp, kh, kw, stride)                     # (B, Cout*kh*kw, H*W)
        if w.requires_grad or w.backward_rule is not None:
            dw = np.matmul(xflat, gcols.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.shape))
        if x.requires_grad or x.backward_rule is not None:
            dx = np.matmul(wmat, gcols)
            x._accumulate(dx.reshape(x.shape))

    return _make(out, "conv_transpose2d", (x, w), rule)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Group normalization over (B,C,H,W); gamma/beta per channel."""
    x, gamma, beta = _ensure_tensor(x), _ensure_tensor(gamma), _ensure_tensor(beta)
    if x.data.ndim != 4:
        raise ShapeError(f"group_norm: need 4-D input, got {x.shape}")
    b, c, h, wd = x.shape
    if c % groups:
        raise ShapeError(f"group_norm: channels {c} not divisible by groups {groups}")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"group_norm: gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}")
    xg = x.data.reshape(b, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = ((xg - mu) * inv).reshape(b, c, h, wd)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def rule(g):
        if gamma.requires_grad or gamma.backward_rule is not None:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad or beta.backward_rule is not None:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad or x.backward_rule is not None:
            n = xg.shape[2]
            dxhat = (g * gamma.data.reshape(1, c, 1, 1)).reshape(b, groups, -1)
            xh = xhat.reshape(b, groups, -1)
            s1 = dxhat.sum(axis=2, keepdims=True)
            s2 = (dxhat * xh).sum(axis=2, keepdims=True)
            dx = inv / n * (n * dxhat - s1 - xh * s2)
            x._accumulate(dx.reshape(x.shape))

    return _make(out, "group_norm", (x, gamma, beta), rule)
