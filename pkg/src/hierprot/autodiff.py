"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape-free engine in the micrograd style: every operation returns a
new :class:`Tensor` that remembers its parents and a closure that maps the
output gradient to parent gradients.  ``backward()`` walks the graph once in
reverse topological order.  Everything is float64; sparse matrices appear
only as constant left factors in ``sparse_matmul``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

GELU_C = np.sqrt(2.0 / np.pi)
GELU_A = 0.044715
LAYER_NORM_EPS = 1e-5


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes; message carries both."""


class NonScalarLoss(ValueError):
    """backward() was started from a tensor with more than one element."""


class LabelOutOfRange(IndexError):
    """A class index lies outside [0, n_classes)."""


class SparseMatrix:
    """Constant COO matrix, used as the left factor of sparse @ dense.

    Not differentiable with respect to its values; gradients flow only into
    the dense right factor.
    """

    __slots__ = ("rows", "cols", "vals", "shape")

    def __init__(self, rows, cols, vals, shape: tuple[int, int]):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ShapeMismatch(
                f"COO arrays disagree: {self.rows.shape} vs {self.cols.shape} vs {self.vals.shape}"
            )
        self.shape = (int(shape[0]), int(shape[1]))

    @property
    def nnz(self) -> int:
        return self.vals.size

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self.cols, self.rows, self.vals, (self.shape[1], self.shape[0]))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        np.add.at(dense, (self.rows, self.cols), self.vals)
        return dense


class Tensor:
    """Node of the reverse-mode graph holding a float64 ndarray."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        # Leaves that require grad carry a zero accumulator from the start so
        # "loss does not touch this leaf" reads as an exact zero gradient.
        self.grad = np.zeros_like(self.values) if (requires_grad and not _parents) else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def item(self) -> float:
        return float(self.values)

    def backward(self) -> None:
        """Populate ``grad`` on every reachable leaf; accumulates across calls."""
        if self.values.size != 1:
            raise NonScalarLoss(f"backward() needs a scalar, got shape {self.values.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        flows: dict[int, np.ndarray] = {id(self): np.ones_like(self.values)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.values)
                node.grad += g
                continue
            for parent, pg in node._backward(g):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pg
                else:
                    flows[key] = pg

    # Operator sugar; all semantics live in the module-level functions.
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

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    @property
    def T(self):
        return transpose(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(values, parents: tuple[Tensor, ...], backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(values)
    return Tensor(values, requires_grad=True, _parents=parents, _backward=backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.values + b.values
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from exc
    return _make(out, (a, b), lambda g: ((a, _unbroadcast(g, a.values.shape)),
                                         (b, _unbroadcast(g, b.values.shape))))


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.values - b.values
    except ValueError as exc:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}") from exc
    return _make(out, (a, b), lambda g: ((a, _unbroadcast(g, a.values.shape)),
                                         (b, _unbroadcast(-g, b.values.shape))))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product with numpy broadcasting."""
    try:
        out = a.values * b.values
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from exc
    return _make(out, (a, b), lambda g: ((a, _unbroadcast(g * b.values, a.values.shape)),
                                         (b, _unbroadcast(g * a.values, b.values.shape))))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = a.values @ b.values
    return _make(out, (a, b), lambda g: ((a, g @ b.values.T), (b, a.values.T @ g)))


def sparse_matmul(sp: SparseMatrix, x: Tensor) -> Tensor:
    """COO-sparse left factor times dense matrix: out = sp @ x."""
    if x.values.ndim != 2 or x.values.shape[0] != sp.shape[1]:
        raise ShapeMismatch(f"sparse_matmul: {sp.shape} @ {x.shape}")
    out = np.zeros((sp.shape[0], x.values.shape[1]))
    np.add.at(out, sp.rows, sp.vals[:, None] * x.values[sp.cols])

    def backward(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, sp.cols, sp.vals[:, None] * g[sp.rows])
        return ((x, gx),)

    return _make(out, (x,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeMismatch(f"transpose expects 2-D, got {a.shape}")
    return _make(a.values.T.copy(), (a,), lambda g: ((a, g.T),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [t.values for t in tensors]
    out = np.concatenate(parts, axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, offsets, axis=axis)
        return tuple((t, piece) for t, piece in zip(tensors, pieces))

    return _make(out, tuple(tensors), backward)


def row_select(x: Tensor, indices) -> Tensor:
    """Gather rows; repeated indices scatter-add in the backward pass."""
    idx = np.asarray(indices, dtype=np.int64)
    out = x.values[idx]

    def backward(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, idx, g)
        return ((x, gx),)

    return _make(out, (x,), backward)


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = x.values.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.values.shape).copy()),)

    return _make(out, (x,), backward)


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = x.values.mean(axis=axis, keepdims=keepdims)
    count = x.values.size if axis is None else x.values.shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.values.shape) / count),)

    return _make(out, (x,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.values)
    return _make(y, (x,), lambda g: ((x, g * y * (1.0 - y)),))


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.values, 0.0)
    return _make(y, (x,), lambda g: ((x, g * (x.values > 0)),))


def gelu(x: Tensor) -> Tensor:
    """GELU with the tanh approximation (not the erf form)."""
    v = x.values
    inner = GELU_C * (v + GELU_A * v**3)
    t = np.tanh(inner)
    y = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = GELU_C * (1.0 + 3.0 * GELU_A * v**2)
        dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t**2) * d_inner
        return ((x, g * dy),)

    return _make(y, (x,), backward)


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.values)
    y = x.values * s
    return _make(y, (x,), lambda g: ((x, g * (s + x.values * s * (1.0 - s))),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize the last axis, then apply the learnable scale and shift."""
    d = x.values.shape[-1]
    if gamma.values.shape != (d,) or beta.values.shape != (d,):
        raise ShapeMismatch(f"layer_norm params {gamma.shape}/{beta.shape} vs features {x.shape}")
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.values + beta.values

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        d_gamma = (g * xhat).sum(axis=lead)
        d_beta = g.sum(axis=lead)
        d_xhat = g * gamma.values
        dx = inv * (d_xhat
                    - d_xhat.mean(axis=-1, keepdims=True)
                    - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True))
        return ((x, dx), (gamma, d_gamma), (beta, d_beta))

    return _make(y, (x, gamma, beta), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((x, y * (g - dot)),)

    return _make(y, (x,), backward)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-p) in training, identity in eval."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit Generator")
    keep = (rng.random(x.values.shape) >= p) / (1.0 - p)
    y = x.values * keep
    return _make(y, (x,), lambda g: ((x, g * keep),))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax at the target index, over the batch."""
    idx = np.asarray(labels, dtype=np.int64)
    if logits.values.ndim != 2 or idx.ndim != 1 or idx.shape[0] != logits.values.shape[0]:
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape} vs labels {idx.shape}")
    n, c = logits.values.shape
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise LabelOutOfRange(f"labels must lie in [0, {c})")
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1)) + logits.values.max(axis=1)
    loss = float((logz - logits.values[np.arange(n), idx]).mean())

    def backward(g):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), idx] -= 1.0
        return ((logits, (float(g) / n) * p),)

    return _make(np.float64(loss), (logits,), backward)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Numerically stable binary cross-entropy, mean over all elements."""
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.values.shape:
        raise ShapeMismatch(f"bce_with_logits: logits {logits.shape} vs targets {t.shape}")
    x = logits.values
    loss = float((np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))).mean())

    def backward(g):
        return ((logits, (float(g) / x.size) * (_sigmoid(x) - t)),)

    return _make(np.float64(loss), (logits,), backward)


def parameter(values) -> Tensor:
    """Leaf tensor with gradient tracking enabled."""
    return Tensor(values, requires_grad=True)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    """Glorot-uniform initialized weight matrix of shape (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


def zeros(*shape: int) -> Tensor:
    return parameter(np.zeros(shape))


def ones(*shape: int) -> Tensor:
    return parameter(np.ones(shape))
