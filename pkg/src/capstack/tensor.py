"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is define-by-run: every operation wraps its numpy result in a new
Tensor that remembers its input tensors plus a closure scattering the output
gradient back to them.  ``backward`` sorts the graph topologically once and
runs the closures in reverse.  Scope is deliberately small: scalars, vectors
and matrices, with the only broadcast being vector-over-rows (bias terms).
Everything is float64; at desk scale speed is a non-issue while gradient
checks need the precision headroom.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block; ops return plain values."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A numpy array plus an optional backpointer into the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.data.shape}")
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def sum(self):
        """Sum of all entries as a 0-d tensor."""
        t = self

        def grad_fn(g):
            if t.requires_grad:
                _accumulate(t, np.broadcast_to(g, t.data.shape))

        return _result(t.data.sum(), (t,), grad_fn)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Trainable leaf tensor with a name and a per-group learning-rate scale."""

    __slots__ = ("name", "lr_scale", "trainable")

    def __init__(self, data, name, lr_scale=1.0, trainable=True):
        super().__init__(data, requires_grad=True)
        if lr_scale <= 0:
            raise ValueError(f"lr_scale must be positive, got {lr_scale}")
        self.name = name
        self.lr_scale = float(lr_scale)
        self.trainable = bool(trainable)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape}, lr_scale={self.lr_scale})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data, parents, grad_fn):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = grad_fn
    return out


def add(a, b):
    """Elementwise sum; a 1-D right operand broadcasts over the rows of a matrix."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape and not (
        a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]
    ):
        raise ValueError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g if g.shape == b.data.shape else g.sum(axis=0))

    return _result(a.data + b.data, (a, b), grad_fn)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.data.shape} - {b.data.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), grad_fn)


def neg(a):
    a = _as_tensor(a)

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return _result(-a.data, (a,), grad_fn)


def mul(a, b):
    """Elementwise product of same-shape tensors, or tensor times python scalar."""
    if isinstance(b, (int, float)):
        a = _as_tensor(a)
        c = float(b)

        def grad_scale(g):
            if a.requires_grad:
                _accumulate(a, g * c)

        return _result(a.data * c, (a,), grad_scale)

    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), grad_fn)


def matmul(a, b):
    """Matrix product; accepts matrix@matrix, matrix@vector and vector@matrix."""
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 2 and bd.ndim == 2:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")

        def grad_mm(g):
            if a.requires_grad:
                _accumulate(a, g @ bd.T)
            if b.requires_grad:
                _accumulate(b, ad.T @ g)

        return _result(ad @ bd, (a, b), grad_mm)

    if ad.ndim == 2 and bd.ndim == 1:
        if ad.shape[1] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")

        def grad_mv(g):
            if a.requires_grad:
                _accumulate(a, np.outer(g, bd))
            if b.requires_grad:
                _accumulate(b, ad.T @ g)

        return _result(ad @ bd, (a, b), grad_mv)

    if ad.ndim == 1 and bd.ndim == 2:
        if ad.shape[0] != bd.shape[0]:
            raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")

        def grad_vm(g):
            if a.requires_grad:
                _accumulate(a, bd @ g)
            if b.requires_grad:
                _accumulate(b, np.outer(ad, g))

        return _result(ad @ bd, (a, b), grad_vm)

    raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")


def transpose(a):
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError(f"transpose requires a matrix, got shape {a.data.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g.T)

    return _result(a.data.T, (a,), grad_fn)


def sigmoid(a):
    """Logistic squashing into (0, 1); overflow-free on the whole float range."""
    a = _as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * out * (1.0 - out))

    return _result(out, (a,), grad_fn)


def tanh(a):
    a = _as_tensor(a)
    out = np.tanh(a.data)

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - out * out))

    return _result(out, (a,), grad_fn)


def softmax(v):
    """Stabilized softmax of a vector: strictly positive, sums to one.

    Max subtraction makes the result invariant under adding a constant to all
    inputs and avoids overflow; entries stay nonzero for spreads below ~700.
    """
    v = _as_tensor(v)
    if v.data.ndim != 1 or v.data.size == 0:
        raise ValueError(f"softmax requires a non-empty vector, got shape {v.data.shape}")
    shifted = v.data - v.data.max()
    e = np.exp(shifted)
    out = e / e.sum()

    def grad_fn(g):
        if v.requires_grad:
            _accumulate(v, out * (g - np.dot(g, out)))

    return _result(out, (v,), grad_fn)


def log_softmax(v):
    v = _as_tensor(v)
    if v.data.ndim != 1 or v.data.size == 0:
        raise ValueError(f"log_softmax requires a non-empty vector, got shape {v.data.shape}")
    shifted = v.data - v.data.max()
    out = shifted - np.log(np.exp(shifted).sum())

    def grad_fn(g):
        if v.requires_grad:
            _accumulate(v, g - np.exp(out) * g.sum())

    return _result(out, (v,), grad_fn)


def concat(tensors, axis=0):
    """Concatenate vectors, or matrices along axis 0 or 1; backward splits."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of an empty list")
    ndim = ts[0].data.ndim
    for t in ts[1:]:
        if t.data.ndim != ndim:
            raise ValueError(
                f"concat rank mismatch: {ts[0].data.shape} vs {t.data.shape}"
            )
    if axis >= ndim:
        raise ValueError(f"concat axis {axis} out of range for rank {ndim}")
    off_axes = [ax for ax in range(ndim) if ax != axis]
    for t in ts[1:]:
        for ax in off_axes:
            if t.data.shape[ax] != ts[0].data.shape[ax]:
                raise ValueError(
                    f"concat off-axis mismatch: {ts[0].data.shape} vs {t.data.shape}"
                )
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        pieces = np.split(g, offsets, axis=axis)
        for t, piece in zip(ts, pieces):
            if t.requires_grad:
                _accumulate(t, piece)

    return _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), grad_fn)


def mean_rows(a):
    """Column means of a matrix as a vector (the per-feature mean annotation)."""
    a = _as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] == 0:
        raise ValueError(f"mean_rows requires a non-empty matrix, got shape {a.data.shape}")
    rows = a.data.shape[0]

    def grad_fn(g):
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g / rows, a.data.shape))

    return _result(a.data.mean(axis=0), (a,), grad_fn)


def row(a, i):
    """Row ``i`` of a matrix; the gradient lands only in that row."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError(f"row requires a matrix, got shape {a.data.shape}")
    if not 0 <= i < a.data.shape[0]:
        raise ValueError(f"row index {i} out of range for {a.data.shape[0]} rows")

    def grad_fn(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[i] += g

    return _result(a.data[i].copy(), (a,), grad_fn)


def pick(v, i):
    """Entry ``i`` of a vector as a 0-d tensor."""
    v = _as_tensor(v)
    if v.data.ndim != 1:
        raise ValueError(f"pick requires a vector, got shape {v.data.shape}")
    if not 0 <= i < v.data.shape[0]:
        raise ValueError(f"pick index {i} out of range for length {v.data.shape[0]}")

    def grad_fn(g):
        if v.requires_grad:
            if v.grad is None:
                v.grad = np.zeros_like(v.data)
            v.grad[i] += g

    return _result(v.data[i], (v,), grad_fn)


def _topological_order(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``grad`` on every tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_topological_order(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
