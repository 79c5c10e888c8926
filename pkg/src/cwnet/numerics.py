"""Reverse-mode automatic differentiation over dense float64 arrays.

Every :class:`Tensor` is a matrix, optionally with leading batch axes in
front of the last two (row, column) axes.  Binary operations follow numpy
broadcasting, and their adjoints sum gradients back down to each operand's
shape, so one parameter matrix can be applied to a whole batch.

Recording only happens inside a :class:`Tape` context::

    with Tape() as tape:
        loss = sum_all(hadamard(w, w))
    grads = tape.backward(loss)

Outside a tape, operations compute values only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ACTIVATIONS",
    "GradCheckReport",
    "Tape",
    "Tensor",
    "activation",
    "add",
    "backward",
    "concat_cols",
    "divide",
    "grad_check",
    "hadamard",
    "index",
    "matmul",
    "mean_axis",
    "pinv_diag",
    "power",
    "record",
    "reciprocal",
    "row_mean",
    "scale",
    "sub",
    "sum_all",
    "sum_axis",
    "transpose",
]

LEAKY_SLOPE = 0.01
SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
RECIPROCAL_FLOOR = 1e-300
PINV_CUTOFF = 1e-12

_tapes: list["Tape"] = []


class Tensor:
    """Dense float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[-2]

    @property
    def cols(self) -> int:
        return self.data.shape[-1]

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return hadamard(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return divide(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of the operations evaluated while the tape is active.

    Nodes are appended as they are created, which is already a topological
    order; :meth:`backward` walks it in reverse.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tapes.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> dict[Tensor, np.ndarray]:
        return backward(self, loss, seed)


def _record(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = _tapes[-1] if _tapes else None
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        tape.nodes.append(out)
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def backward(tape: Tape, loss: Tensor, seed: np.ndarray | None = None) -> dict[Tensor, np.ndarray]:
    """Gradients of ``loss`` with respect to every tensor it depends on.

    Returns a map from tensor to gradient array and also stores the result in
    ``.grad`` of each leaf that requires gradients (overwriting, never
    accumulating across calls).
    """
    if seed is None:
        if loss.data.size != 1:
            raise ValueError(f"loss must be scalar-shaped, got {loss.shape}")
        seed = np.ones_like(loss.data)
    grads: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=np.float64)}
    owners: dict[int, Tensor] = {id(loss): loss}

    if loss._vjp is not None:
        try:
            start = len(tape.nodes) - 1 - tape.nodes[::-1].index(loss)
        except ValueError:
            raise ValueError("loss was not recorded on this tape") from None
        for node in reversed(tape.nodes[: start + 1]):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                    owners[key] = parent
    out = {owners[k]: g for k, g in grads.items()}
    for t, g in out.items():
        if t._vjp is None:
            t.grad = g
    return out


def record(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Put an externally computed operation on the active tape.

    ``vjp`` maps the output gradient to one gradient (or None) per parent.
    """
    return _record(np.asarray(data, dtype=np.float64), tuple(as_tensor(p) for p in parents), vjp)


# ---------------------------------------------------------------- primitives


def _mm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x @ y`` routing a 2-D operand against a stack through one GEMM."""
    if y.ndim == 2 and x.ndim > 2:
        return (x.reshape(-1, x.shape[-1]) @ y).reshape(x.shape[:-1] + (y.shape[-1],))
    if x.ndim == 2 and y.ndim > 2:
        yt = np.swapaxes(y, -1, -2)
        out = yt.reshape(-1, yt.shape[-1]) @ x.T
        return np.swapaxes(out.reshape(yt.shape[:-1] + (x.shape[0],)), -1, -2)
    return np.matmul(x, y)


def _sum_outer(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``sum over batch of left^T @ right`` for stacks with equal leading shape."""
    return left.reshape(-1, left.shape[-1]).T @ right.reshape(-1, right.shape[-1])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _mm(a.data, b.data)

    def vjp(g):
        ga = gb = None
        if a.requires_grad:
            if a.data.ndim == 2 and g.ndim > 2:
                bb = np.broadcast_to(b.data, g.shape[:-2] + b.shape[-2:])
                ga = _sum_outer(np.swapaxes(g, -1, -2), np.swapaxes(bb, -1, -2))
            else:
                ga = _unbroadcast(_mm(g, _swap(b.data)), a.shape)
        if b.requires_grad:
            if b.data.ndim == 2 and g.ndim > 2:
                aa = np.broadcast_to(a.data, g.shape[:-2] + a.shape[-2:])
                gb = _sum_outer(aa, g)
            else:
                gb = _unbroadcast(_mm(_swap(a.data), g), b.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _record(_swap(a.data).copy(), (a,), lambda g: (_swap(g),))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)
    return _record(a.data * s, (a,), lambda g: (g * s,))


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp)


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    if np.any(np.abs(a.data) < RECIPROCAL_FLOOR):
        raise FloatingPointError("reciprocal of a value below 1e-300 in magnitude")
    out = 1.0 / a.data
    return _record(out, (a,), lambda g: (-g * out * out,))


def divide(a, b) -> Tensor:
    return hadamard(a, reciprocal(b))


def pinv_diag(a) -> Tensor:
    """Elementwise pseudo-reciprocal: ``1/x`` where ``|x| > 1e-12``, else 0."""
    a = as_tensor(a)
    big = np.abs(a.data) > PINV_CUTOFF
    out = np.zeros_like(a.data)
    out[big] = 1.0 / a.data[big]
    return _record(out, (a,), lambda g: (-g * out * out,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p
    return _record(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def concat_cols(a, b, *more) -> Tensor:
    parts = [as_tensor(t) for t in (a, b, *more)]
    rows = {t.rows for t in parts}
    if len(rows) != 1:
        raise ValueError(f"concat_cols needs equal row counts, got {[t.shape for t in parts]}")
    lead = np.broadcast_shapes(*(t.shape[:-2] for t in parts))
    arrays = [np.broadcast_to(t.data, lead + t.shape[-2:]) for t in parts]
    out = np.concatenate(arrays, axis=-1)
    bounds = np.cumsum([0] + [t.cols for t in parts])

    def vjp(g):
        return tuple(
            _unbroadcast(g[..., lo:hi], t.shape) for t, lo, hi in zip(parts, bounds[:-1], bounds[1:])
        )

    return _record(out, parts, vjp)


def row_mean(a) -> Tensor:
    """Mean over columns: ``(r, c) -> (r, 1)``."""
    a = as_tensor(a)
    c = a.cols
    return _record(a.data.mean(axis=-1, keepdims=True), (a,), lambda g: (np.broadcast_to(g / c, a.shape),))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(a.shape, g.reshape(-1)[0]),))


def sum_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record(out, (a,), vjp)


def mean_axis(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    return scale(sum_axis(a, axis, keepdims), 1.0 / a.shape[axis])


def index(a, key) -> Tensor:
    """``a[key]`` with a scatter-add adjoint (repeated indices accumulate)."""
    a = as_tensor(a)
    out = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _record(np.array(out), (a,), vjp)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


# --------------------------------------------------------------- activations


def _leaky_relu(x):
    # np.where is several times slower than arithmetic on the mask
    d = (x > 0).astype(np.float64)
    d *= 1.0 - LEAKY_SLOPE
    d += LEAKY_SLOPE
    return x * d, d


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gelu(x):
    cdf = ndtr(x)
    d = x * x
    d *= -0.5
    np.exp(d, out=d)
    d *= _INV_SQRT_2PI
    d *= x
    d += cdf
    return x * cdf, d


def _selu(x):
    neg = SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(x, 0.0))
    y = np.where(x > 0, SELU_SCALE * x, neg - SELU_SCALE * SELU_ALPHA)
    d = np.where(x > 0, SELU_SCALE, neg)
    return y, d


def _exp(x):
    y = np.exp(x)
    return y, y


def _identity(x):
    return x, np.ones_like(x)


ACTIVATIONS: dict[str, Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = {
    "leaky_relu": _leaky_relu,
    "gelu": _gelu,
    "selu": _selu,
    "exp": _exp,
    "identity": _identity,
}


def activation(a, kind: str) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)}") from None
    a = as_tensor(a)
    if kind == "identity":
        return a
    y, d = fn(a.data)
    return _record(y, (a,), lambda g: (g * d,))


# -------------------------------------------------------------- grad check


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    coordinates: int
    tol: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor] | dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of ``f()`` against central differences.

    ``f`` must rebuild its computation from the current parameter values on
    every call.  The relative error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``; ``floor``
    keeps coordinates whose true gradient is zero from dividing by noise.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    named = dict(params) if isinstance(params, dict) else {p.name or f"p{i}": p for i, p in enumerate(params)}
    with Tape() as tape:
        loss = f()
    grads = tape.backward(loss)

    worst_err, worst_at, count = 0.0, None, 0
    per_param = {}
    for name, p in named.items():
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros_like(p.data)
        analytic = np.broadcast_to(analytic, p.shape)
        param_err = 0.0
        for idx in np.ndindex(p.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = f().item()
            p.data[idx] = orig - h
            down = f().item()
            p.data[idx] = orig
            numeric = (up - down) / (2 * h)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            count += 1
            param_err = max(param_err, err)
            if err > worst_err:
                worst_err, worst_at = err, (name, idx)
        per_param[name] = param_err
    return GradCheckReport(worst_err, worst_at, count, tol, per_param)
