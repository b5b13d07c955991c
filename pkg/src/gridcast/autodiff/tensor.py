"""Dense tensors with tape-based reverse-mode differentiation.

Operations record a pullback on the active :class:`Tape` whenever one of their
inputs requires a gradient; outside a tape they run as plain numpy (inference).
"""

from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError, TapeError

_local = threading.local()
_DEFAULT_BITS = 32


def set_default_precision(bits: int) -> None:
    """Process-wide float width used when no :func:`precision` block is active."""
    global _DEFAULT_BITS
    if bits not in (32, 64):
        raise ValueError("precision must be 32 or 64")
    _DEFAULT_BITS = bits


_DTYPES = {32: np.dtype(np.float32), 64: np.dtype(np.float64), 80: np.dtype(np.longdouble)}


def get_dtype() -> np.dtype:
    return _DTYPES[getattr(_local, "bits", None) or _DEFAULT_BITS]


@contextlib.contextmanager
def precision(bits: int):
    """Scoped float width. 80 selects the platform's extended type (oracles only)."""
    if bits not in _DTYPES:
        raise ValueError("precision must be 32, 64 or 80")
    prev = getattr(_local, "bits", None)
    _local.bits = bits
    try:
        yield
    finally:
        _local.bits = prev


def _active_tape() -> Tape | None:
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_from_op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=get_dtype())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._from_op = False

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> Tensor:
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._from_op = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _d(t: Tensor) -> np.ndarray:
    """Operand data in the active precision."""
    dtype = get_dtype()
    return t.data if t.data.dtype == dtype else t.data.astype(dtype)


Pullback = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive applications for one backward pass.

    Use as a context manager; nested tapes shadow outer ones.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Pullback]] = []
        self._outputs: set[int] = set()
        self.exhausted = False

    def __enter__(self) -> Tape:
        if not hasattr(_local, "tapes"):
            _local.tapes = []
        _local.tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.tapes.pop()

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], pullback: Pullback) -> None:
        if self.exhausted:
            raise TapeError("tape already consumed by backward(); call reset()")
        self.nodes.append((out, inputs, pullback))
        self._outputs.add(id(out))

    def reset(self) -> None:
        self.nodes.clear()
        self._outputs.clear()
        self.exhausted = False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf tensor that requires grad."""
        if self.exhausted:
            raise TapeError("tape already consumed by a previous backward pass")
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise TapeError("loss does not depend on any tensor requiring grad")
        if loss._from_op and id(loss) not in self._outputs:
            raise TapeError("loss was not recorded on this tape")
        self.exhausted = True
        # cotangents are carried in at least float64 regardless of forward precision
        gdtype = np.promote_types(loss.data.dtype, np.float64)
        grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=gdtype)}
        leaves: dict[int, Tensor] = {}
        if not loss._from_op:
            leaves[id(loss)] = loss
        for out, inputs, pullback in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, pullback(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if not inp._from_op:
                    leaves[key] = inp
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            g = g.astype(t.data.dtype, copy=False)
            t.grad = g.copy() if t.grad is None else t.grad + g
        self.nodes.clear()
        self._outputs.clear()


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], pullback: Pullback) -> Tensor:
    if getattr(_local, "debug", False) and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {pullback.__qualname__.split('.')[0]}")
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, needs)
    if needs:
        out._from_op = True
        tape.record(out, inputs, pullback)
    return out


@contextlib.contextmanager
def debug_mode():
    """Check every primitive's output for non-finite values."""
    prev = getattr(_local, "debug", False)
    _local.debug = True
    try:
        yield
    finally:
        _local.debug = prev


def _trailing_ok(big: tuple, small: tuple) -> bool:
    return len(small) <= len(big) and big[len(big) - len(small):] == small


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.reshape(-1, *shape).sum(axis=0) if shape else g.sum()


# -- primitives -------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., n, k] @ b`` where ``b`` is ``[k, m]`` (shared) or ``[..., k, m]`` with matching batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = _d(a), _d(b)
    out = np.matmul(ad, bd)

    def pullback(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return ga, gb

    return _emit(out, (a, b), pullback)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may instead match the trailing dimensions of ``a`` (bias)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not _trailing_ok(a.shape, b.shape):
        raise ShapeError(f"add: shape {b.shape} does not conform to {a.shape}")
    out = _d(a) + _d(b)
    bshape = b.shape
    return _emit(out, (a, b), lambda g: (g, _reduce_to(g, bshape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not _trailing_ok(a.shape, b.shape):
        raise ShapeError(f"sub: shape {b.shape} does not conform to {a.shape}")
    out = _d(a) - _d(b)
    bshape = b.shape
    return _emit(out, (a, b), lambda g: (g, -_reduce_to(g, bshape)))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product of equal-shape tensors, or scaling by a Python number."""
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        c = float(b)
        ad = _d(a)
        return _emit(ad * ad.dtype.type(c), (a,), lambda g: (g * c,))
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ {a.shape} vs {b.shape}")
    ad, bd = _d(a), _d(b)
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    xd = _d(x)
    mask = xd > 0
    return _emit(np.where(mask, xd, 0).astype(xd.dtype), (x,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = as_tensor(x)
    xd = _d(x)
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(inner)
    out = 0.5 * xd * (1.0 + th)

    def pullback(g):
        x = xd.astype(g.dtype)
        t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _emit(out.astype(xd.dtype, copy=False), (x,), pullback)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    xd = _d(x)
    e = np.exp(xd - xd.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def pullback(g):
        x = xd.astype(g.dtype)
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        s64 = e / e.sum(axis=-1, keepdims=True)
        return (s64 * (g - (g * s64).sum(axis=-1, keepdims=True)),)

    return _emit(s, (x,), pullback)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then optional elementwise affine ``gamma * xhat + beta``."""
    x = as_tensor(x)
    d = x.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm affine parameter shape {p.shape} != ({d},)")
    xd = _d(x)
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = _d(gamma) if gamma is not None else None
    out = xhat * gd if gd is not None else xhat
    if beta is not None:
        out = out + _d(beta)
    inputs = (x,) + tuple(p for p in (gamma, beta) if p is not None)

    def pullback(g):
        x = xd.astype(g.dtype)
        c = x - x.mean(axis=-1, keepdims=True)
        inv64 = 1.0 / np.sqrt((c * c).mean(axis=-1, keepdims=True) + eps)
        xh = c * inv64
        gh = g * gd if gd is not None else g
        gx = inv64 * (gh - gh.mean(axis=-1, keepdims=True) - xh * (gh * xh).mean(axis=-1, keepdims=True))
        grads = [gx]
        if gamma is not None:
            grads.append(_reduce_to(g * xh, (d,)))
        if beta is not None:
            grads.append(_reduce_to(g, (d,)))
        return grads

    return _emit(out.astype(xd.dtype, copy=False), inputs, pullback)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    if axes is None or len(axes) == 0:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for rank {x.ndim}")
    inv = tuple(np.argsort(axes))
    return _emit(np.transpose(_d(x), axes), (x,), lambda g: (np.transpose(g, inv),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = _d(x).reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    src = x.shape
    return _emit(out, (x,), lambda g: (g.reshape(src),))


def slice_(x: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing."""
    x = as_tensor(x)
    xd = _d(x)
    out = xd[index]
    if not np.shares_memory(out, xd) and out.size:
        raise ShapeError("slice supports basic indexing only")

    def pullback(g):
        full = np.zeros_like(xd)
        full[index] += g
        return (full,)

    return _emit(np.array(out), (x,), pullback)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    try:
        out = np.concatenate([_d(t) for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    xd = _d(x)
    out = np.asarray(xd.mean(axis=axis), dtype=xd.dtype)
    n = xd.size if axis is None else xd.shape[axis]
    shape = xd.shape

    def pullback(g):
        g = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape),)

    return _emit(out, (x,), pullback)


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    xd = _d(x)
    out = np.asarray(xd.sum(axis=axis), dtype=xd.dtype)
    shape = xd.shape

    def pullback(g):
        g = g if axis is None else np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _emit(out, (x,), pullback)


def mse_loss(pred: Tensor, target) -> Tensor:
    pred = as_tensor(pred)
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shapes differ: {pred.shape} vs {target.shape}")
    pd, td = _d(pred), _d(target)
    diff = pd - td
    out = np.asarray((diff * diff).mean(), dtype=pd.dtype)
    scale = 2.0 / diff.size

    def pullback(g):
        gd = g * scale * (pd.astype(g.dtype) - td)
        return gd, -gd

    return _emit(out, (pred, target), pullback)
