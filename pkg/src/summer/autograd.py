"""Reverse-mode automatic differentiation over float64 numpy arrays.

The engine is deliberately small: it provides exactly the operations the
model math needs (elementwise arithmetic, matmul, softmax, reductions,
indexing, concatenation) plus a finite-difference gradient checker. Every
differentiable operation records its inputs and a vector-Jacobian closure
on the output tensor; :func:`backward` materializes the tape for one scalar
output and replays it in reverse.

Conventions:
  - float64 everywhere; the gradient-check tolerances depend on it.
  - gradients accumulate by summation into ``Tensor.grad``; averaging is the
    responsibility of loss definitions.
  - one backward per recorded graph; a second call raises instead of
    silently double-accumulating.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, ParameterError

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables tape recording inside its block."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense float64 array participating in the autodiff graph.

    Leaf tensors are created directly (parameters with ``requires_grad=True``,
    data as constants). Non-leaf tensors are produced by the operations below
    and carry the closures needed to replay adjoints.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_vjp", "_consumed")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], None] | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __getitem__(self, key):
        return take(self, key)

    # transpose of a 2-D tensor
    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Build an op output, recording the adjoint closure when grads are live."""
    out = Tensor(values)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.values.shape)
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


class Tape:
    """Topologically ordered record of the operations reaching one output.

    Replaying the tape in reverse visits every recorded operation exactly
    once and populates ``grad`` on every ``requires_grad`` ancestor.
    """

    def __init__(self, order: list[Tensor]):
        self._order = order

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
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
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return sum(1 for t in self._order if t._vjp is not None)

    def replay(self, root: Tensor) -> None:
        root.grad = np.ones_like(root.values)
        for node in reversed(self._order):
            if node._vjp is None:
                continue
            if node._consumed:
                raise ContractError(
                    "backward was already invoked on this tape; re-record the forward pass"
                )
            node._consumed = True
            if node.grad is not None:
                node._vjp(node.grad)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad ancestor of a scalar loss."""
    if loss.values.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._vjp is None:
        raise ContractError("tape is empty: loss is not the output of a recorded operation")
    Tape.trace(loss).replay(loss)


# -- elementwise operations ---------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values + b.values

    def vjp(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(out_values, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values - b.values

    def vjp(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(out_values, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values * b.values

    def vjp(g):
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _make(out_values, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values / b.values

    def vjp(g):
        _accumulate(a, g / b.values)
        _accumulate(b, -g * a.values / (b.values * b.values))

    return _make(out_values, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.values, (a,), lambda g: _accumulate(a, -g))


def power(a: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    out_values = a.values**p

    def vjp(g):
        _accumulate(a, g * p * a.values ** (p - 1.0))

    return _make(out_values, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    out_values = np.exp(a.values)

    def vjp(g):
        _accumulate(a, g * out_values)

    return _make(out_values, (a,), vjp)


def log(a: Tensor) -> Tensor:
    out_values = np.log(a.values)

    def vjp(g):
        _accumulate(a, g / a.values)

    return _make(out_values, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    out_values = np.tanh(a.values)

    def vjp(g):
        _accumulate(a, g * (1.0 - out_values * out_values))

    return _make(out_values, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    out_values = np.where(
        a.values >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.values))),
        np.exp(-np.abs(a.values)) / (1.0 + np.exp(-np.abs(a.values))),
    )

    def vjp(g):
        _accumulate(a, g * out_values * (1.0 - out_values))

    return _make(out_values, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0

    def vjp(g):
        _accumulate(a, g * mask)

    return _make(np.where(mask, a.values, 0.0), (a,), vjp)


def clip_min(a: Tensor, lo: float) -> Tensor:
    """Elementwise max(a, lo); gradient passes only where a > lo."""
    mask = a.values > lo

    def vjp(g):
        _accumulate(a, g * mask)

    return _make(np.where(mask, a.values, lo), (a,), vjp)


# -- linear algebra and shape ops ----------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {a.values.shape} x {b.values.shape}")
    out_values = a.values @ b.values

    def vjp(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _make(out_values, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise DimensionError(f"transpose requires a 2-D tensor, got shape {a.values.shape}")

    def vjp(g):
        _accumulate(a, g.T)

    return _make(a.values.T.copy(), (a,), vjp)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    old_shape = a.values.shape

    def vjp(g):
        _accumulate(a, g.reshape(old_shape))

    return _make(a.values.reshape(shape).copy(), (a,), vjp)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_values = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.values.shape))

    return _make(out_values, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_values = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.values.size if axis is None else a.values.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.values.shape) / count)

    return _make(out_values, (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_values = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            _accumulate(t, g[tuple(index)])

    return _make(out_values, tensors, vjp)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_values = np.stack([t.values for t in tensors], axis=axis)

    def vjp(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(out_values, tensors, vjp)


def flip(a: Tensor, axis: int = 0) -> Tensor:
    def vjp(g):
        _accumulate(a, np.flip(g, axis=axis))

    return _make(np.flip(a.values, axis=axis).copy(), (a,), vjp)


def take(a: Tensor, key) -> Tensor:
    """Indexing with gradient scatter-add; supports ints, slices, index arrays."""
    out_values = np.array(a.values[key])

    def vjp(g):
        if not a.requires_grad:
            return
        buf = np.zeros_like(a.values)
        np.add.at(buf, key, g)
        _accumulate(a, buf)

    return _make(out_values, (a,), vjp)


def softmax(a: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    """Temperature softmax: exp(x/t) / sum exp(x/t), max-subtracted for stability."""
    if temperature <= 0:
        raise ParameterError(f"softmax temperature must be > 0, got {temperature}")
    scaled = a.values / temperature
    scaled = scaled - scaled.max(axis=axis, keepdims=True)
    e = np.exp(scaled)
    out_values = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out_values).sum(axis=axis, keepdims=True)
        _accumulate(a, out_values * (g - inner) / temperature)

    return _make(out_values, (a,), vjp)


# -- gradient checking ----------------------------------------------------


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a deterministic zero-argument callable returning a scalar
    Tensor computed from ``params`` (fix any noise inputs before calling).
    Returns the maximum over all parameter entries of
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    params = list(params)
    if not 1e-7 <= eps <= 1e-4:
        raise ParameterError(f"eps must lie in [1e-7, 1e-4], got {eps}")
    for p in params:
        if not p.requires_grad:
            raise ParameterError("all checked params must have requires_grad=True")

    with no_grad():
        base_a = f().item()
        base_b = f().item()
    if base_a != base_b:
        raise ContractError("f is not deterministic: seed all noise sources before checking")

    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params]

    max_rel = 0.0
    with no_grad():
        for p, ana in zip(params, analytic):
            flat = p.values.reshape(-1)
            ana_flat = ana.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = f().item()
                flat[i] = orig - eps
                f_minus = f().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(ana_flat[i]), abs(numeric), 1e-8)
                max_rel = max(max_rel, abs(ana_flat[i] - numeric) / denom)
    for p in params:
        p.zero_grad()
    return max_rel
