"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run tape: every primitive returns a new :class:`Tensor` that
records its parents and a backward rule. Calling ``backward()`` on a
scalar output walks the tape once in reverse topological order and
accumulates gradients into every node that requires them.

The primitive set is deliberately small and closed (add, sub, mul,
matmul, affine, tanh, gelu, square, mean, total, concat, rowscale) so
each backward rule stays auditable. Broadcasting is restricted to
scalar-with-tensor, plus the two explicit broadcast primitives
``affine`` (bias over rows) and ``rowscale`` (per-row scale factor).

Everything is float64. Any primitive that would produce a NaN or Inf
raises :class:`NonFiniteError` instead of letting it propagate.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "constant",
    "parameter",
    "concat",
    "affine",
    "rowscale",
    "grad_or_zero",
    "grad_check",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

_node_ids = itertools.count()


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested primitive."""


class NonFiniteError(ArithmeticError):
    """A primitive produced NaN or Inf."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(data: np.ndarray, op: str, node_id: int) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by '{op}' (node {node_id})")


class Tensor:
    """A node of the tape: float64 data plus backward bookkeeping.

    Tensors are treated as immutable once constructed; all primitives
    allocate fresh output arrays. ``grad`` is populated by
    ``backward()`` on the nodes that require gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, op="leaf",
                 parents=(), backward=None):
        self.data = _as_f64(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = op
        self.node_id = next(_node_ids)
        self._parents: tuple[Tensor, ...] = parents
        self._backward: Callable[[np.ndarray], None] | None = backward
        _check_finite(self.data, op, self.node_id)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph walking -------------------------------------------------

    def _topo(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into ``grad`` over the whole tape.

        ``self`` must be scalar. Gradients of nodes visited by an
        earlier backward pass are reset first, so repeated calls are
        independent.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() seed must be scalar, got shape {self.shape}")
        order = self._topo()
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(constant(other), self)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def gelu(self):
        return gelu(self)

    def square(self):
        return square(self)

    def mean(self):
        return mean(self)

    def total(self):
        return total(self)


def constant(data, name=None) -> Tensor:
    """Wrap an array as a non-differentiable leaf."""
    return Tensor(data, requires_grad=False, name=name)


def parameter(data, name=None) -> Tensor:
    """Wrap an array as a trainable leaf."""
    return Tensor(data, requires_grad=True, name=name)


def _accumulate(node: Tensor, g: np.ndarray) -> None:
    if not node.requires_grad and node._backward is None:
        return
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0 or t.data.size == 1


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if _is_scalar(a) or _is_scalar(b):
        return
    if a.shape != b.shape:
        raise ShapeError(f"'{op}' shape mismatch: {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, t: Tensor) -> np.ndarray:
    # scalars take the full reduction of the incoming gradient
    if _is_scalar(t) and g.shape != t.data.shape:
        return np.sum(g).reshape(t.data.shape)
    return g


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _binary_shapes(a, b, "add")
    out_data = a.data + b.data
    req = a.requires_grad or b.requires_grad

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a))
        _accumulate(b, _unbroadcast(g, b))

    return Tensor(out_data, req, op="add", parents=(a, b), backward=bwd if req else None)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _binary_shapes(a, b, "sub")
    out_data = a.data - b.data
    req = a.requires_grad or b.requires_grad

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a))
        _accumulate(b, _unbroadcast(-g, b))

    return Tensor(out_data, req, op="sub", parents=(a, b), backward=bwd if req else None)


def neg(a) -> Tensor:
    a = _coerce(a)
    req = a.requires_grad

    def bwd(g):
        _accumulate(a, -g)

    return Tensor(-a.data, req, op="neg", parents=(a,), backward=bwd if req else None)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _binary_shapes(a, b, "mul")
    out_data = a.data * b.data
    req = a.requires_grad or b.requires_grad

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a))
        _accumulate(b, _unbroadcast(g * a.data, b))

    return Tensor(out_data, req, op="mul", parents=(a, b), backward=bwd if req else None)


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"'matmul' expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"'matmul' inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data
    req = a.requires_grad or b.requires_grad

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return Tensor(out_data, req, op="matmul", parents=(a, b), backward=bwd if req else None)


def affine(x, w, b) -> Tensor:
    """Row-wise affine map ``x @ w + b`` with the bias broadcast over rows."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ShapeError(f"'affine' expects (B,n)@(n,m)+(m,), got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"'affine' dims differ: {x.shape}, {w.shape}, {b.shape}")
    out_data = x.data @ w.data + b.data
    req = x.requires_grad or w.requires_grad or b.requires_grad

    def bwd(g):
        _accumulate(x, g @ w.data.T)
        _accumulate(w, x.data.T @ g)
        _accumulate(b, g.sum(axis=0))

    return Tensor(out_data, req, op="affine", parents=(x, w, b), backward=bwd if req else None)


def rowscale(x, s) -> Tensor:
    """Scale each row of ``x`` (B, n) by the matching entry of ``s`` (B,)."""
    x, s = _coerce(x), _coerce(s)
    if x.data.ndim != 2 or s.data.ndim != 1 or x.shape[0] != s.shape[0]:
        raise ShapeError(f"'rowscale' expects (B,n) and (B,), got {x.shape}, {s.shape}")
    out_data = x.data * s.data[:, None]
    req = x.requires_grad or s.requires_grad

    def bwd(g):
        _accumulate(x, g * s.data[:, None])
        _accumulate(s, (g * x.data).sum(axis=1))

    return Tensor(out_data, req, op="rowscale", parents=(x, s), backward=bwd if req else None)


def tanh(a) -> Tensor:
    a = _coerce(a)
    out_data = np.tanh(a.data)
    req = a.requires_grad

    def bwd(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return Tensor(out_data, req, op="tanh", parents=(a,), backward=bwd if req else None)


def gelu(a) -> Tensor:
    a = _coerce(a)
    phi = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out_data = a.data * phi
    req = a.requires_grad

    def bwd(g):
        dens = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        _accumulate(a, g * (phi + a.data * dens))

    return Tensor(out_data, req, op="gelu", parents=(a,), backward=bwd if req else None)


def square(a) -> Tensor:
    a = _coerce(a)
    out_data = a.data * a.data
    req = a.requires_grad

    def bwd(g):
        _accumulate(a, g * (2.0 * a.data))

    return Tensor(out_data, req, op="square", parents=(a,), backward=bwd if req else None)


def mean(a) -> Tensor:
    a = _coerce(a)
    out_data = np.mean(a.data)
    req = a.requires_grad

    def bwd(g):
        _accumulate(a, np.full(a.data.shape, float(g) / a.data.size))

    return Tensor(out_data, req, op="mean", parents=(a,), backward=bwd if req else None)


def total(a) -> Tensor:
    """Sum of all entries (scalar output)."""
    a = _coerce(a)
    out_data = np.sum(a.data)
    req = a.requires_grad

    def bwd(g):
        _accumulate(a, np.full(a.data.shape, float(g)))

    return Tensor(out_data, req, op="total", parents=(a,), backward=bwd if req else None)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ShapeError("'concat' needs at least one operand")
    nd = tensors[0].data.ndim
    for t in tensors:
        if t.data.ndim != nd:
            raise ShapeError("'concat' operands must share rank")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * nd
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return Tensor(out_data, req, op="concat", parents=tuple(tensors), backward=bwd if req else None)


def grad_or_zero(t: Tensor) -> np.ndarray:
    """Gradient of a leaf after backward(); zeros if the tape never touched it."""
    if t.grad is None:
        return np.zeros_like(t.data)
    return t.grad


def grad_check(fn, leaves: dict[str, np.ndarray], eps: float = 1e-6) -> dict[str, float]:
    """Compare tape gradients of ``fn`` against central finite differences.

    ``fn`` maps a dict of named leaf Tensors to a scalar Tensor. Returns
    the max relative error per leaf, with the error of coordinate j
    defined as |ad_j - fd_j| / max(1, |ad_j|, |fd_j|).
    """
    if not 1e-8 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-8, 1e-3], got {eps}")
    base = {k: _as_f64(v).copy() for k, v in leaves.items()}

    tensors = {k: parameter(v.copy(), name=k) for k, v in base.items()}
    out = fn(tensors)
    if out.data.size != 1:
        raise ShapeError("grad_check target must be scalar")
    out.backward()
    analytic = {k: grad_or_zero(t).copy() for k, t in tensors.items()}

    def eval_at(arrays):
        t = {k: constant(v, name=k) for k, v in arrays.items()}
        return fn(t).item()

    report: dict[str, float] = {}
    for key in base:
        flat = base[key].reshape(-1)
        ad = analytic[key].reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            arrays = {k: v.copy() for k, v in base.items()}
            arrays[key].reshape(-1)[j] = flat[j] + eps
            up = eval_at(arrays)
            arrays[key].reshape(-1)[j] = flat[j] - eps
            down = eval_at(arrays)
            fd = (up - down) / (2.0 * eps)
            err = abs(ad[j] - fd) / max(1.0, abs(ad[j]), abs(fd))
            worst = max(worst, err)
        report[key] = worst
    return report
