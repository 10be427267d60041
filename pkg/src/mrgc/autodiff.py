"""Small dense reverse-mode autodiff over 2-D float64 arrays.

Every tensor is a matrix.  Scalars are ``(1, 1)``; vectors are rows or
columns.  Binary elementwise ops broadcast a ``(1, c)`` row, an ``(r, 1)``
column or a ``(1, 1)`` scalar against a full matrix.

``backward`` accumulates into ``.grad``; call :func:`zero_grad` (or
``Tensor.zero_grad``) between steps.  Calling ``backward`` twice without a
reset doubles the gradients.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    pass


class ContractError(RuntimeError):
    pass


_ids = itertools.count()
_recording = True


@contextmanager
def no_grad():
    """Evaluate without recording the differentiation graph."""
    global _recording
    prev = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "parents", "id", "op")

    def __init__(self, value, requires_grad: bool = False, parents=(), op: str = "leaf"):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.value = v
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = list(parents)
        self.id = next(_ids)
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() on a tensor of shape {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, o):
        return add(self, _wrap(o))

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(_wrap(o)))

    def __rsub__(self, o):
        return add(_wrap(o), neg(self))

    def __mul__(self, o):
        if np.isscalar(o):
            return scalar_mul(self, float(o))
        return mul(self, _wrap(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if np.isscalar(o):
            return scalar_mul(self, 1.0 / float(o))
        return div(self, _wrap(o))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, _wrap(o))

    @property
    def T(self):
        return transpose(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def parameter(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def _make(value, op, inputs_and_rules) -> Tensor:
    """Build a result tensor; ``inputs_and_rules`` is [(input, rule(g) -> grad)]."""
    if not _recording:
        return Tensor(value, op=op)
    parents = [(t, rule) for t, rule in inputs_and_rules if t.requires_grad]
    return Tensor(value, requires_grad=bool(parents), parents=parents, op=op)


def _broadcast_shape(kind, a, b):
    (ra, ca), (rb, cb) = a.shape, b.shape
    r = ra if ra == rb or rb == 1 else rb if ra == 1 else None
    c = ca if ca == cb or cb == 1 else cb if ca == 1 else None
    if r is None or c is None:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}")
    return r, c


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return _make(a.value + b.value, "add", [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value
    return _make(av * bv, "mul", [
        (a, lambda g: _unbroadcast(g * bv, a.shape)),
        (b, lambda g: _unbroadcast(g * av, b.shape)),
    ])


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("div", a, b)
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, "div", [
        (a, lambda g: _unbroadcast(g / bv, a.shape)),
        (b, lambda g: _unbroadcast(-g * out / bv, b.shape)),
    ])


def div_scalar(a: Tensor, s: Tensor) -> Tensor:
    if s.shape != (1, 1):
        raise ShapeError(f"div_scalar: divisor must be (1, 1), got {s.shape}")
    return div(a, s)


def neg(a: Tensor) -> Tensor:
    return _make(-a.value, "neg", [(a, lambda g: -g)])


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(c * a.value, "scalar_mul", [(a, lambda g: c * g)])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, "matmul", [
        (a, lambda g: g @ bv.T),
        (b, lambda g: av.T @ g),
    ])


def spmm(m, x: Tensor) -> Tensor:
    """Left-multiply by a constant (possibly sparse) matrix ``m``."""
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: incompatible shapes {m.shape} and {x.shape}")
    mt = m.T
    out = m @ x.value
    out = np.asarray(out.todense() if sp.issparse(out) else out)
    return _make(out, "spmm", [(x, lambda g: np.asarray(mt @ g))])


def transpose(a: Tensor) -> Tensor:
    return _make(a.value.T.copy(), "transpose", [(a, lambda g: g.T)])


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from exc
    return _make(out, "reshape", [(a, lambda g: g.reshape(old))])


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _make(np.where(mask, a.value, 0.0), "relu", [(a, lambda g: g * mask)])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _make(out, "exp", [(a, lambda g: g * out)])


def log(a: Tensor) -> Tensor:
    av = a.value
    return _make(np.log(av), "log", [(a, lambda g: g / av)])


def power(a: Tensor, p: float) -> Tensor:
    av = a.value
    p = float(p)
    return _make(av ** p, "power", [(a, lambda g: g * p * av ** (p - 1.0))])


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array([[a.value.sum()]]), "sum_all", [(a, lambda g: np.full(shape, g[0, 0]))])


def mean_all(a: Tensor) -> Tensor:
    shape = a.shape
    n = a.value.size
    return _make(np.array([[a.value.sum() / n]]), "mean_all",
                 [(a, lambda g: np.full(shape, g[0, 0] / n))])


def row_sum(a: Tensor) -> Tensor:
    cols = a.shape[1]
    return _make(a.value.sum(axis=1, keepdims=True), "row_sum",
                 [(a, lambda g: np.repeat(g, cols, axis=1))])


def col_sum(a: Tensor) -> Tensor:
    rows = a.shape[0]
    return _make(a.value.sum(axis=0, keepdims=True), "col_sum",
                 [(a, lambda g: np.repeat(g, rows, axis=0))])


def l2_norm_rows(a: Tensor) -> Tensor:
    """Row norms as an ``(r, 1)`` column; the gradient at a zero row is taken as 0."""
    av = a.value
    norms = np.sqrt((av * av).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0, norms, 1.0)

    def rule(g):
        return np.where(norms > 0, g * av / safe, 0.0)

    return _make(norms, "l2_norm_rows", [(a, rule)])


def squared_frobenius(a: Tensor) -> Tensor:
    av = a.value
    return _make(np.array([[np.sum(av * av)]]), "squared_frobenius", [(a, lambda g: 2.0 * g[0, 0] * av)])


def softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        # per-row Jacobian-vector product: s * (g - <g, s>)
        return s * (g - (g * s).sum(axis=1, keepdims=True))

    return _make(s, "softmax_rows", [(a, rule)])


def log_softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return _make(out, "log_softmax_rows", [(a, lambda g: g - s * g.sum(axis=1, keepdims=True))])


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    cols = {t.shape[1] for t in tensors}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[0] for t in tensors])
    out = np.vstack([t.value for t in tensors])
    return _make(out, "concat_rows", [
        (t, (lambda lo, hi: lambda g: g[lo:hi])(bounds[i], bounds[i + 1]))
        for i, t in enumerate(tensors)
    ])


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    out = np.hstack([t.value for t in tensors])
    return _make(out, "concat_cols", [
        (t, (lambda lo, hi: lambda g: g[:, lo:hi])(bounds[i], bounds[i + 1]))
        for i, t in enumerate(tensors)
    ])


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]
    if len(index) and (index.min() < 0 or index.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")
    shape = a.shape

    def rule(g):
        # scatter-add through a sparse selection matrix keeps the sum order fixed
        sel = sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))), shape=(n, len(index)))
        return np.asarray(sel @ g).reshape(shape)

    return _make(a.value[index], "gather_rows", [(a, rule)])


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.value)


OPS: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "div": div,
    "relu": relu,
    "softmax_rows": softmax_rows,
    "log_softmax_rows": log_softmax_rows,
    "exp": exp,
    "log": log,
    "neg": neg,
    "sum_all": sum_all,
    "mean_all": mean_all,
    "row_sum": row_sum,
    "col_sum": col_sum,
    "transpose": transpose,
    "l2_norm_rows": l2_norm_rows,
    "squared_frobenius": squared_frobenius,
    "scalar_mul": scalar_mul,
    "concat_rows": lambda *ts: concat_rows(ts),
    "concat_cols": lambda *ts: concat_cols(ts),
    "gather_rows": gather_rows,
    "div_scalar": div_scalar,
    "power": power,
    "reshape": reshape,
    "spmm": spmm,
}


def tensor_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch by op name, e.g. ``tensor_op("matmul", a, b)``."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward


def _topological(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent, _ in reversed(node.parents):
            if parent.id not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a (1, 1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    grads = {loss.id: np.ones((1, 1))}
    for node in reversed(order):
        g = grads.get(node.id)
        if g is None:
            continue
        for parent, rule in node.parents:
            contrib = rule(g)
            prev = grads.get(parent.id)
            grads[parent.id] = contrib if prev is None else prev + contrib
    for node in order:
        g = grads.get(node.id)
        if g is not None and node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: OptimizerState) -> None:
    """One bias-corrected Adam update, in place.  Gradients are left untouched."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {i} (shape {p.shape}) has no gradient")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.value) for p in params]
        state.second_moment = [np.zeros_like(p.value) for p in params]
    if len(state.first_moment) != len(params):
        raise ContractError("optimizer state was built for a different parameter list")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# finite differences


def numeric_gradients(build: Callable, points: Sequence[np.ndarray], h: float = 1e-5):
    """Central differences of ``build(*tensors)`` at ``points``.

    Returns ``(central, forward, backward)`` lists of arrays.  One-sided
    quotients are returned so callers can spot kinks.
    """
    points = [np.array(p, dtype=np.float64) for p in points]

    def f(vals):
        with no_grad():
            return build(*[Tensor(v) for v in vals]).item()

    f0 = f(points)
    central, fwd, bwd = [], [], []
    for i, p in enumerate(points):
        c = np.zeros_like(p)
        fo = np.zeros_like(p)
        bo = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in points]
            minus = [q.copy() for q in points]
            plus[i][idx] += h
            minus[i][idx] -= h
            fp, fm = f(plus), f(minus)
            c[idx] = (fp - fm) / (2 * h)
            fo[idx] = (fp - f0) / h
            bo[idx] = (f0 - fm) / h
        central.append(c)
        fwd.append(fo)
        bwd.append(bo)
    return central, fwd, bwd


def grad_check(build: Callable, points: Sequence[np.ndarray], h: float = 1e-5,
               kink_tol: float = 1e-2) -> float:
    """Max relative error between backprop and central differences.

    Error per coordinate is ``|analytic - central| / max(1, |analytic|)``.
    Coordinates where the forward and backward one-sided quotients disagree
    by more than ``kink_tol`` (relative) sit on or next to a
    nondifferentiable point, e.g. a relu input at exactly 0, and are left
    out of the max.
    """
    tensors = [parameter(p) for p in points]
    out = build(*tensors)
    if out.shape != (1, 1):
        raise ContractError("grad_check needs a scalar-valued expression")
    backward(out)
    central, fwd, bwd = numeric_gradients(build, points, h)
    worst = 0.0
    for t, c, fo, bo in zip(tensors, central, fwd, bwd):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.value)
        scale = np.maximum(1.0, np.maximum(np.abs(fo), np.abs(bo)))
        smooth = np.abs(fo - bo) <= kink_tol * scale
        err = np.abs(analytic - c) / np.maximum(1.0, np.abs(analytic))
        if smooth.any():
            worst = max(worst, float(err[smooth].max()))
    return worst
