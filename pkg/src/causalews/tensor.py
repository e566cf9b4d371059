"""Dense float64 tensors with taped reverse-mode differentiation.

Small by design: exactly the primitives the encoder-decoder model and the
graph-parameter objective need. Everything is 64-bit so finite-difference
checks can run at tight tolerances. Primitives never broadcast silently;
mixed-shape arithmetic goes through the explicit ``expand`` op (``matmul``
additionally accepts a plain 2-D operand against a batched one, which is
stated conformance, not broadcasting).
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operands do not conform to a primitive's shape contract."""


class Tensor:
    """A dense float64 array, optionally tracked on the active tape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "backward")

    def __init__(self, out: Tensor, backward: Callable[[], None]):
        self.out = out
        self.backward = backward


_STATE = threading.local()


def _active_tape():
    return getattr(_STATE, "tape", None)


class Tape:
    """Creation-ordered record of primitive applications.

    Creation order is topological by construction, so one reverse sweep
    propagates gradients. A tape is single-writer; untaped threads can run
    the same primitives concurrently against frozen tensors.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _STATE.tape = None


def _record(out: Tensor, backward: Callable[[], None]) -> None:
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.nodes.append(_Node(out, backward))


def backward(tape: Tape, root: Tensor) -> None:
    """Accumulate d(root)/d(input) into every tracked tensor on the tape."""
    if root.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if tape._consumed:
        raise RuntimeError("backward: tape already consumed (one pass per tape)")
    tape._consumed = True
    root.accumulate_grad(np.ones_like(root.data))
    for node in reversed(tape.nodes):
        if node.out.grad is not None:
            node.backward()


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} vs {b.shape} do not conform")


# ---------------------------------------------------------------------------
# arithmetic primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad)
        if b.requires_grad:
            b.accumulate_grad(out.grad)

    _record(out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad)
        if b.requires_grad:
            b.accumulate_grad(-out.grad)

    _record(out, bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * b.data)
        if b.requires_grad:
            b.accumulate_grad(out.grad * a.data)

    _record(out, bwd)
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + float(c), a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad)

    _record(out, bwd)
    return out


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c, a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * c)

    _record(out, bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the trailing two axes.

    Either operand may be a plain 2-D matrix against a batched partner;
    batched-batched requires identical leading dims.
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if a.data.ndim > 2 and b.data.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: leading dims differ, {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)

    def bwd():
        g = out.grad
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            if ga.shape != a.shape:  # b batched, a plain
                ga = ga.reshape((-1,) + a.shape).sum(axis=0)
            a.accumulate_grad(ga)
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            if gb.shape != b.shape:  # a batched, b plain
                gb = gb.reshape((-1,) + b.shape).sum(axis=0)
            b.accumulate_grad(gb)

    _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# structural primitives


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape), a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad.reshape(a.shape))

    _record(out, bwd)
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(a.data, axes), a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(np.transpose(out.grad, inv))

    _record(out, bwd)
    return out


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast to ``shape`` (numpy broadcast rules, checked here)."""
    shape = tuple(shape)
    try:
        view = np.broadcast_to(a.data, shape)
    except ValueError as e:
        raise ShapeError(f"expand: cannot broadcast {a.shape} to {shape}") from e
    out = Tensor(np.array(view), a.requires_grad)
    ndim_added = len(shape) - a.data.ndim
    summed_axes = tuple(range(ndim_added)) + tuple(
        i + ndim_added for i, ext in enumerate(a.shape) if ext == 1 and shape[i + ndim_added] != 1
    )

    def bwd():
        if a.requires_grad:
            g = out.grad.sum(axis=summed_axes, keepdims=False) if summed_axes else out.grad
            a.accumulate_grad(g.reshape(a.shape))

    _record(out, bwd)
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty input list")
    nd = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != nd:
            raise ShapeError("concat: rank mismatch")
        for ax in range(nd):
            if ax != axis % nd and t.shape[ax] != tensors[0].shape[ax]:
                raise ShapeError(
                    f"concat: shapes {t.shape} vs {tensors[0].shape} differ off axis {axis}"
                )
    out = Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        any(t.requires_grad for t in tensors),
    )
    sizes = [t.shape[axis % nd] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * nd
                idx[axis % nd] = slice(lo, hi)
                t.accumulate_grad(out.grad[tuple(idx)])

    _record(out, bwd)
    return out


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    nd = a.data.ndim
    axis = axis % nd
    if not (0 <= start <= stop <= a.shape[axis]):
        raise ShapeError(f"slice_axis: [{start}:{stop}] out of range for {a.shape} axis {axis}")
    idx = [slice(None)] * nd
    idx[axis] = slice(start, stop)
    out = Tensor(np.array(a.data[tuple(idx)]), a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[tuple(idx)] = out.grad
            a.accumulate_grad(g)

    _record(out, bwd)
    return out


def gather_axis(a: Tensor, axis: int, indices) -> Tensor:
    """Select rows along ``axis`` by integer index (repeats allowed)."""
    nd = a.data.ndim
    axis = axis % nd
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_axis: indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise ShapeError(f"gather_axis: indices out of range for {a.shape} axis {axis}")
    out = Tensor(np.take(a.data, idx, axis=axis), a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            sel = [slice(None)] * nd
            for pos, src in enumerate(idx):
                sel[axis] = src
                gsel = [slice(None)] * nd
                gsel[axis] = pos
                g[tuple(sel)] += out.grad[tuple(gsel)]
            a.accumulate_grad(g)

    _record(out, bwd)
    return out


def index_axis(a: Tensor, axis: int, i: int) -> Tensor:
    """Select one index along ``axis``, dropping that axis."""
    nd = a.data.ndim
    axis = axis % nd
    if not (0 <= i < a.shape[axis]):
        raise ShapeError(f"index_axis: index {i} out of range for {a.shape} axis {axis}")
    idx = [slice(None)] * nd
    idx[axis] = i
    out = Tensor(np.array(a.data[tuple(idx)]), a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[tuple(idx)] = out.grad
            a.accumulate_grad(g)

    _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# reductions


def _reduce_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def sum_reduce(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _reduce_axes(axis, a.data.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims), a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axis=axes)
            a.accumulate_grad(np.broadcast_to(g, a.shape))

    _record(out, bwd)
    return out


def mean_reduce(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _reduce_axes(axis, a.data.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    out = Tensor(a.data.mean(axis=axes, keepdims=keepdims), a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axis=axes)
            a.accumulate_grad(np.broadcast_to(g, a.shape) / count)

    _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y, a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * y * (1.0 - y))

    _record(out, bwd)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * (1.0 - y * y))

    _record(out, bwd)
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    trace = getattr(_STATE, "relu_trace", None)
    if trace is not None:
        trace.append(mask.copy())
    out = Tensor(a.data * mask, a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * mask)

    _record(out, bwd)
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y, a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad * y)

    _record(out, bwd)
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data), a.requires_grad)

    def bwd():
        if a.requires_grad:
            a.accumulate_grad(out.grad / a.data)

    _record(out, bwd)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax over ``axis``, computed with max-subtraction for stability."""
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = out.grad
            dot = (g * y).sum(axis=axis, keepdims=True)
            a.accumulate_grad(y * (g - dot))

    _record(out, bwd)
    return out


def attention(q: Tensor, k: Tensor, v: Tensor, scale: float) -> Tensor:
    """Fused scaled-dot-product attention over the trailing (T, head_dim)
    axes: softmax((q @ k^T) * scale, axis=-1) @ v.

    One taped node instead of four keeps the T x T temporaries to a minimum;
    the softmax uses the same max-subtraction as the standalone primitive.
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeError(f"attention: q/k/v shapes differ: {q.shape} {k.shape} {v.shape}")
    scale = float(scale)
    kt = np.swapaxes(k.data, -1, -2)
    s = q.data @ kt
    s *= scale
    m = s.max(axis=-1, keepdims=True)
    s -= m
    np.exp(s, out=s)
    denom = s.sum(axis=-1, keepdims=True)
    s /= denom
    weights = s  # (..., T, T), row-stochastic
    out = Tensor(weights @ v.data, q.requires_grad or k.requires_grad or v.requires_grad)

    def bwd():
        g = out.grad
        if v.requires_grad:
            v.accumulate_grad(np.swapaxes(weights, -1, -2) @ g)
        if q.requires_grad or k.requires_grad:
            ga = g @ np.swapaxes(v.data, -1, -2)
            ga -= (ga * weights).sum(axis=-1, keepdims=True)
            ga *= weights
            ga *= scale
            if q.requires_grad:
                q.accumulate_grad(ga @ k.data)
            if k.requires_grad:
                k.accumulate_grad(np.swapaxes(ga, -1, -2) @ q.data)

    _record(out, bwd)
    return out


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean, unit variance."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = Tensor(xhat, a.requires_grad)

    def bwd():
        if a.requires_grad:
            g = out.grad
            gm = g.mean(axis=-1, keepdims=True)
            gx = (g * xhat).mean(axis=-1, keepdims=True)
            a.accumulate_grad((g - gm - xhat * gx) * inv)

    _record(out, bwd)
    return out


# ---------------------------------------------------------------------------
# gradient checking


class _ReluTrace:
    """Collects relu activation patterns so kink crossings can be detected."""

    def __enter__(self):
        _STATE.relu_trace = []
        return self

    def __exit__(self, exc_type, exc, tb):
        self.patterns = _STATE.relu_trace
        _STATE.relu_trace = None

    def signature(self) -> bytes:
        return b"".join(p.tobytes() for p in self.patterns)


def gradient_check(
    f: Callable[[Tensor], Tensor],
    point: np.ndarray,
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng=None,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Coordinates whose +/-eps evaluations land on different sides of a relu
    kink are excluded: the function is not differentiable there and the
    finite difference is meaningless. Returns
    ``max_i |g_ad,i - g_fd,i| / max(1, |g_fd,i|)`` over checked coordinates.
    """
    x0 = np.asarray(point, dtype=np.float64)
    p = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(p)
        if y.size != 1:
            raise ShapeError(f"gradient_check: f must be scalar-valued, got {y.shape}")
        backward(tape, y)
    g_ad = np.zeros_like(x0) if p.grad is None else p.grad.reshape(x0.shape)

    flat = x0.reshape(-1)
    n = flat.size
    coords = np.arange(n)
    if max_coords is not None and n > max_coords:
        if rng is None:
            raise ValueError("gradient_check: rng required when subsampling coordinates")
        coords = np.sort(rng.choice(n, size=max_coords, replace=False))

    worst = 0.0
    for i in coords:
        xp = flat.copy()
        xp[i] += eps
        with _ReluTrace() as tp:
            fp = f(Tensor(xp.reshape(x0.shape))).item()
        xm = flat.copy()
        xm[i] -= eps
        with _ReluTrace() as tm:
            fm = f(Tensor(xm.reshape(x0.shape))).item()
        if tp.signature() != tm.signature():
            continue  # kink crossed; skip this coordinate
        g_fd = (fp - fm) / (2.0 * eps)
        err = abs(g_ad.reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd))
        worst = max(worst, err)
    return worst
