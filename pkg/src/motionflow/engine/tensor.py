"""Dense tensor with reverse-mode autodiff, backed by numpy arrays.

Design constraints: row-major contiguous data, eager NaN/Inf detection on
every op output, and a deliberately small broadcasting surface (equal
shapes, python scalars, or a right-aligned trailing shape such as a bias
vector) so every backward rule stays auditable. The graph is built by op
closures and replayed once, in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from ..errors import NonFinite, ShapeMismatch

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ShapeMismatch(f"unsupported default dtype {dtype}")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(mode: str):
    """Temporarily switch default dtype: 'single' or 'double'."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    set_default_dtype({"single": np.float32, "double": np.float64}[mode])
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the context."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """n-dim float array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

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

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- operators ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def slice(self, axis: int, start: int, stop: int) -> "Tensor":
        return narrow(self, axis, start, stop - start)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int] | None = None) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return mean(self, axis, keepdims)

    # -- backprop --------------------------------------------------------
    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output.

        Gradients accumulate into leaf tensors' .grad; intermediate nodes are
        released afterwards, so a graph can be replayed only once.
        """
        if self.size != 1:
            raise ShapeMismatch(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node._parents:  # interior node: free graph and scratch grads
                node.grad = None
                node._parents = ()
                node._backward = None


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Create a leaf tensor, cast to the default (or given) dtype."""
    arr = np.ascontiguousarray(data, dtype=dtype or _DEFAULT_DTYPE)
    if not np.isfinite(arr).all():
        raise NonFinite("leaf tensor contains non-finite values")
    return Tensor(arr, requires_grad=requires_grad)


def param(data, dtype=None) -> Tensor:
    return tensor(data, requires_grad=True, dtype=dtype)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        raise ShapeMismatch(f"gradient shape {g.shape} != tensor shape {t.data.shape}")
    if t.grad is None:
        # Copy: g may alias a child's grad buffer shared with other parents.
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFinite("op produced NaN/Inf")
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_DEFAULT_DTYPE))


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if gs != ss)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    # Allowed: equal shapes, scalars, or right-aligned trailing broadcast.
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or a.size == 1 or b.size == 1:
        return
    k = min(len(sa), len(sb))
    for x, y in zip(sa[len(sa) - k:], sb[len(sb) - k:]):
        if x != y and x != 1 and y != 1:
            raise ShapeMismatch(f"shapes {sa} and {sb} are not trailing-broadcast compatible")


# -- elementary ops -----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _reduce_to(g, a.data.shape))
        _accum(b, _reduce_to(g, b.data.shape))

    return _result(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b)
    out_data = a.data - b.data

    def backward(g):
        _accum(a, _reduce_to(g, a.data.shape))
        _accum(b, _reduce_to(-g, b.data.shape))

    return _result(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_broadcast(a, b)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _reduce_to(g * b.data, a.data.shape))
        _accum(b, _reduce_to(g * a.data, b.data.shape))

    return _result(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accum(a, -g)

    return _result(-a.data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., n, k) @ (k, m), or (..., n, k) @ (..., k, m) with equal leading dims."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-dim operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"inner dims disagree: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"leading dims disagree: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if b.ndim == 2 and gb.ndim > 2:
                gb = gb.sum(axis=tuple(range(gb.ndim - 2)))
            _accum(b, gb)

    return _result(out_data, (a, b), backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b for x (..., n, k), w (k, m), b (m,)."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    if x.shape[-1] != w.shape[-2] or w.ndim != 2 or b.shape != (w.shape[-1],):
        raise ShapeMismatch(f"affine shapes disagree: {x.shape} @ {w.shape} + {b.shape}")
    out_data = x.data @ w.data + b.data

    def backward(g):
        if x.requires_grad:
            _accum(x, g @ w.data.T)
        if w.requires_grad:
            gw = np.swapaxes(x.data, -1, -2) @ g
            if gw.ndim > 2:
                gw = gw.sum(axis=tuple(range(gw.ndim - 2)))
            _accum(w, gw)
        if b.requires_grad:
            _accum(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _result(out_data, (x, w, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _coerce(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _result(out_data, (a,), backward)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    a = _coerce(a)
    if axes is None:
        axes = list(range(a.ndim - 2)) + [a.ndim - 1, a.ndim - 2]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = np.ascontiguousarray(a.data.transpose(axes))

    def backward(g):
        _accum(a, np.ascontiguousarray(g.transpose(inv)))

    return _result(out_data, (a,), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice `length` entries from `start` along `axis`."""
    a = _coerce(a)
    axis = axis % a.ndim
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeMismatch(f"slice [{start}:{start + length}] out of range for axis {axis} of {a.shape}")
    idx = tuple(slice(None) if i != axis else slice(start, start + length) for i in range(a.ndim))
    out_data = np.ascontiguousarray(a.data[idx])

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _result(out_data, (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ShapeMismatch("concat of zero tensors")
    axis = axis % ts[0].ndim
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, s, e in zip(ts, offsets[:-1], offsets[1:]):
            idx = tuple(slice(None) if i != axis else slice(s, e) for i in range(g.ndim))
            _accum(t, np.ascontiguousarray(g[idx]))

    return _result(out_data, tuple(ts), backward)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data)

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _result(out_data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data)
    count = a.size if axis is None else a.shape[axis]

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape) / count)

    return _result(out_data, (a,), backward)


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over `axis`; positions where mask is False get probability 0.

    The mask is a constant boolean array (not differentiated); rows must keep
    at least one allowed entry.
    """
    a = _coerce(a)
    logits = a.data
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    mx = logits.max(axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(logits - mx)
    denom = e.sum(axis=axis, keepdims=True)
    out_data = e / denom

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - dot))

    return _result(out_data, (a,), backward)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (no affine)."""
    a = _coerce(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    with np.errstate(over="ignore"):
        var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        _accum(a, inv * (g - gm - xhat * gx))

    return _result(xhat, (a,), backward)


def silu(a: Tensor) -> Tensor:
    a = _coerce(a)
    with np.errstate(over="ignore"):
        sig = 1.0 / (1.0 + np.exp(-a.data))
    out_data = a.data * sig

    def backward(g):
        _accum(a, g * sig * (1.0 + a.data * (1.0 - sig)))

    return _result(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    a = _coerce(a)
    with np.errstate(over="ignore"):
        out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _result(out_data, (a,), backward)


def logsigmoid(a: Tensor) -> Tensor:
    a = _coerce(a)
    x = a.data
    z = np.exp(-np.abs(x))
    out_data = np.where(x >= 0, -np.log1p(z), x - np.log1p(z))

    def backward(g):
        # d/dx log sigmoid(x) = sigmoid(-x), computed overflow-free
        sig_neg = np.where(x >= 0, z / (1.0 + z), 1.0 / (1.0 + z))
        _accum(a, g * sig_neg)

    return _result(out_data.astype(x.dtype), (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    a = _coerce(a)
    out_data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        _accum(a, g * inside)

    return _result(out_data, (a,), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"minimum needs equal shapes, got {a.shape} vs {b.shape}")
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def backward(g):
        _accum(a, g * take_a)
        _accum(b, g * ~take_a)

    return _result(out_data, (a, b), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of `table` (V, d) selected by integer ids (m,)."""
    table = _coerce(table)
    ids = np.asarray(ids)
    if ids.ndim != 1 or not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatch(f"ids must be a 1-d integer array, got {ids.dtype} {ids.shape}")
    out_data = table.data[ids].copy()

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        _accum(table, gt)

    return _result(out_data, (table,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    d = sub(a, b)
    return mean(mul(d, d))
