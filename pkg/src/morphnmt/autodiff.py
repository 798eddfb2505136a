"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded in order;
``backward`` walks the tape in reverse and accumulates gradients into the
:class:`Parameter` leaves.  With no active tape the same functions compute
values only, which is what decoding uses.

The op set is deliberately small: whatever the GRUs, the two attention
modules, the readout and the cross-entropy losses need, and nothing else.
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

DTYPE = np.float64

_active_tape: "Tape | None" = None


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "_index", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._index = -1
        self._tape = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar, all routed through the recorded ops below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


class Parameter(Tensor):
    """A named, persistent leaf whose gradient accumulates across backward calls."""

    __slots__ = ("grad", "trainable")

    def __init__(self, name: str, value, trainable: bool = True):
        super().__init__(np.array(value, dtype=DTYPE, copy=True), requires_grad=trainable, name=name)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class ParameterSet:
    """Ordered name -> Parameter mapping; names are unique."""

    def __init__(self, params: Iterable[Parameter] = ()):
        self._params: "OrderedDict[str, Parameter]" = OrderedDict()
        for p in params:
            self.add(p)

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise KeyError(f"duplicate parameter name {param.name!r}")
        self._params[param.name] = param
        return param

    def create(self, name: str, value, trainable: bool = True) -> Parameter:
        return self.add(Parameter(name, value, trainable))

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self):
        for p in self._params.values():
            p.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]):
        for n, p in self._params.items():
            v = values[n]
            if v.shape != p.data.shape:
                raise ShapeError(f"{n}: shape {v.shape} != {p.data.shape}")
            p.data[...] = v

    def num_entries(self) -> int:
        return sum(p.data.size for p in self._params.values())


class Tape:
    """Ordered record of the operations executed while it is active.

    Use as a context manager::

        with Tape() as tape:
            loss = model_loss(...)
        backward(loss, tape)
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._previous = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._previous = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._previous
        self._previous = None
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Tensor, parents: tuple, fn: Callable) -> Tensor:
        out._parents = parents
        out._backward = fn
        out._index = len(self.nodes)
        out._tape = self
        out.requires_grad = True
        self.nodes.append(out)
        return out

    def backward(self, loss: Tensor):
        backward(loss, self)


class no_grad:
    """Suspend recording, e.g. while decoding."""

    def __enter__(self):
        global _active_tape
        self._previous = _active_tape
        _active_tape = None

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._previous
        return False


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, parents: tuple, fn: Callable) -> Tensor:
    out = Tensor(data)
    tape = _active_tape
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, tape: Tape):
    """Accumulate d(loss)/d(parameter) into every reachable trainable Parameter.

    Intermediate gradients are rebuilt on every call, so running backward on
    the same tape twice doubles the parameter gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if isinstance(loss, Parameter):
        if loss.trainable:
            loss.grad += 1.0
        return
    if loss._tape is not tape:
        raise ValueError("loss was not produced on this tape")
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    # owned[j]: grads[j] is a private buffer that may be updated in place
    owned = [False] * len(nodes)
    grads[loss._index] = np.ones_like(loss.data)
    for i in range(loss._index, -1, -1):
        g = grads[i]
        if g is None:
            continue
        grads[i] = None
        node = nodes[i]
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if isinstance(parent, Parameter):
                parent.grad += pg
            elif parent._tape is tape:
                j = parent._index
                cur = grads[j]
                if cur is None:
                    grads[j] = pg
                elif owned[j]:
                    cur += pg
                else:
                    # pg may alias another node's gradient; copy before mutating
                    grads[j] = cur + pg
                    owned[j] = True


# ---------------------------------------------------------------- ops


def matmul(a, b) -> Tensor:
    """Matrix product with numpy ``@`` semantics (leading batch dims broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if a.ndim == 1 or b.ndim == 1:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    if bd.ndim == 2:
        def fn(g):
            ga = g @ bd.T if a.requires_grad else None
            gb = None
            if b.requires_grad:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    else:
        def fn(g):
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
            gb = None
            if b.requires_grad:
                at = np.swapaxes(ad, -1, -2)
                # a row-vector left operand makes this an outer product
                gb = _unbroadcast(at * g if ad.shape[-2] == 1 else at @ g, bd.shape)
            return ga, gb

    return _emit(out, (a, b), fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def fn(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit(a.data + b.data, (a, b), fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def fn(g):
        return _unbroadcast(g, sa), -_unbroadcast(g, sb)

    return _emit(a.data - b.data, (a, b), fn)


def mul(a, b) -> Tensor:
    """Pointwise product (broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _emit(ad * bd, (a, b), fn)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # tanh form is overflow-free and gives exactly 0.5 at 0
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def _softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max-subtraction."""
    a = as_tensor(a)
    if a.data.size == 0 or a.shape[axis] == 0:
        raise ShapeError("softmax of an empty tensor")
    out = _softmax_np(a.data, axis)

    def fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (a,), fn)


def log_softmax_np(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of nothing")
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in ts], axis=axis)

    def fn(g):
        parts = []
        for k in range(len(ts)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(bounds[k], bounds[k + 1])
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return _emit(out, tuple(ts), fn)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)

    def fn(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(ts)))

    return _emit(out, tuple(ts), fn)


def getitem(a, key) -> Tensor:
    """Basic (non-fancy) indexing, e.g. ``x[:, 3]`` or ``x[..., 0:4]``."""
    a = as_tensor(a)
    shape = a.shape

    def fn(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[key] += g
        return (full,)

    return _emit(a.data[key], (a,), fn)


def slice_last(a, start: int, stop: int) -> Tensor:
    return getitem(a, (Ellipsis, slice(start, stop)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _emit(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def embedding(table, ids) -> Tensor:
    """Row gather ``table[ids]``; backward scatter-adds into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    if table.shape[0] == 0:
        raise ShapeError("embedding table is empty")

    def fn(g):
        full = np.zeros(table.shape, dtype=DTYPE)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _emit(table.data[ids], (table,), fn)


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Weighted summed negative log-likelihood of integer ``targets``.

    ``logits`` has shape (..., V); ``targets`` and ``weights`` have shape (...).
    Returns the scalar ``-sum(weights * log softmax(logits)[targets])``.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != logits.shape[:-1]:
        raise ShapeError(f"targets shape {t.shape} does not match logits {logits.shape}")
    w = np.ones(t.shape, dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE)
    logp = log_softmax_np(logits.data)
    picked = np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]
    loss = -(w * picked).sum()

    def fn(g):
        p = np.exp(logp)
        np.put_along_axis(p, t[..., None], np.take_along_axis(p, t[..., None], axis=-1) - 1.0, axis=-1)
        return (p * (w * g)[..., None],)

    return _emit(np.array(loss), (logits,), fn)


# ------------------------------------------------------- gradient checking


class NonDeterministicLoss(RuntimeError):
    pass


def finite_diff_check(params: ParameterSet, loss_fn: Callable[[], Tensor], epsilon: float = 1e-5,
                      names: Sequence[str] | None = None) -> dict[str, float]:
    """Compare analytic gradients with central differences, entry by entry.

    ``loss_fn`` must build the loss from the current parameter values.  Returns
    the max relative error per parameter, where the relative error of one entry
    is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params.zero_grads()
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = {p.name: p.grad.copy() for p in params}
    params.zero_grads()

    with no_grad():
        base1 = float(loss_fn().data)
        base2 = float(loss_fn().data)
    if base1 != base2:
        raise NonDeterministicLoss(f"loss_fn returned {base1!r} then {base2!r}")

    report = {}
    selected = [params[n] for n in names] if names is not None else list(params)
    with no_grad():
        for p in selected:
            worst = 0.0
            flat = p.data.reshape(-1)
            ag = analytic[p.name].reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + epsilon
                up = float(loss_fn().data)
                flat[k] = orig - epsilon
                down = float(loss_fn().data)
                flat[k] = orig
                num = (up - down) / (2.0 * epsilon)
                err = abs(ag[k] - num) / max(1e-8, abs(ag[k]) + abs(num))
                worst = max(worst, err)
            report[p.name] = worst
    return report
