"""Dense float64 tensors with reverse-mode differentiation.

Every op builds its output eagerly and records a closure that pushes the
upstream gradient into its parents.  Leading batch axes broadcast the way
numpy does; gradients are summed back down to each parent's shape.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class InvalidMaskError(ValueError):
    """A mask leaves no position to normalise over."""


class ContractError(RuntimeError):
    """An operation was called outside its contract."""


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """Row-major flattened view of the data."""
        return self.data.reshape(-1)

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __len__(self):
        return self.data.shape[0]

    # -- gradient plumbing -------------------------------------------------

    def zero_grad(self):
        self.grad = None

    def _add_grad(self, g):
        if not self.requires_grad:
            return
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def _add_grad_at(self, index, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[index] += g

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        Leaf gradients add onto whatever is already stored; clear them with
        ``zero_grad`` between optimisation steps.
        """
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    f"backward() needs a scalar loss, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        order = _topological(self)
        for node in order:
            if not node.is_leaf:
                node.grad = None
        if self.is_leaf:
            self._add_grad(grad)
            return
        self.grad = np.array(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self, floor=None):
        return log(self, floor=floor)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        a._add_grad(g)
        b._add_grad(g)

    return _node(data, (a, b), backward)


def neg(a):
    return _node(-a.data, (a,), lambda g: a._add_grad(-g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        a._add_grad(g * b.data)
        b._add_grad(g * a.data)

    return _node(data, (a, b), backward)


def reciprocal(a):
    data = 1.0 / a.data
    return _node(data, (a,), lambda g: a._add_grad(-g * data * data))


def tanh(a):
    data = np.tanh(a.data)
    return _node(data, (a,), lambda g: a._add_grad(g * (1.0 - data * data)))


def sigmoid(a):
    # tanh form is overflow-free and gives exactly 0.5 at zero
    data = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(data, (a,), lambda g: a._add_grad(g * data * (1.0 - data)))


def exp(a):
    data = np.exp(a.data)
    return _node(data, (a,), lambda g: a._add_grad(g * data))


def log(a, floor=None):
    """Natural log; with ``floor`` the input is clamped from below first."""
    x = a.data if floor is None else np.maximum(a.data, floor)
    data = np.log(x)

    def backward(g):
        local = 1.0 / x
        if floor is not None:
            local = np.where(a.data >= floor, local, 0.0)
        a._add_grad(g * local)

    return _node(data, (a,), backward)


def where(condition, a, b):
    """Select from ``a`` where ``condition`` holds, else from ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(condition, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        a._add_grad(np.where(cond, g, 0.0))
        b._add_grad(np.where(cond, 0.0, g))

    return _node(data, (a, b), backward)


# -- reductions and shape ops -----------------------------------------------


def tsum(a, axis=None, keepdims=False):
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._add_grad(np.broadcast_to(g, a.shape))

    return _node(np.asarray(data), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod(
        [a.shape[i] for i in np.atleast_1d(axis)]
    )
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def reshape(a, shape):
    data = a.data.reshape(shape)
    return _node(data, (a,), lambda g: a._add_grad(g.reshape(a.shape)))


def getitem(a, index):
    data = a.data[index]
    if not isinstance(data, np.ndarray):
        data = np.asarray(data)
    return _node(data, (a,), lambda g: a._add_grad_at(index, g))


def concat(tensors, axis=-1):
    """Join tensors along ``axis``; the output width is the sum of widths."""
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"cannot concatenate shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._add_grad(piece)

    return _node(data, tensors, backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            t._add_grad(np.take(g, i, axis=axis))

    return _node(data, tensors, backward)


def matmul(a, b):
    """Matrix product with numpy batching rules over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError(f"matmul needs arrays, got shapes {a.shape} and {b.shape}")
    k_a = a.shape[-1]
    k_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if k_a != k_b:
        raise ShapeError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    data = np.matmul(a.data, b.data)

    def backward(g):
        ad, bd = a.data, b.data
        if bd.ndim == 1:
            a._add_grad(np.multiply.outer(g, bd))
            b._add_grad(np.tensordot(ad, g, axes=(range(ad.ndim - 1), range(g.ndim))))
            return
        if ad.ndim == 1:
            a._add_grad(np.matmul(g, np.swapaxes(bd, -1, -2)))
            b._add_grad(np.multiply.outer(ad, g) if g.ndim == 1 else ad[:, None] * g[..., None, :])
            return
        a._add_grad(np.matmul(g, np.swapaxes(bd, -1, -2)))
        if bd.ndim == 2 and ad.ndim > 2:
            b._add_grad(
                ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            )
        else:
            b._add_grad(np.matmul(np.swapaxes(ad, -1, -2), g))

    return _node(data, (a, b), backward)


def take_rows(table, ids, skip=None):
    """Row lookup ``table[ids]``; ids equal to ``skip`` yield zero rows."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"row id out of range for table with {n} rows")
    data = table.data[ids]
    keep = None
    if skip is not None:
        keep = ids != skip
        data = data * keep[..., None]

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        if keep is not None:
            np.add.at(table.grad, ids[keep], g[keep])
        else:
            np.add.at(table.grad, ids, g)

    return _node(data, (table,), backward)


# -- normalisation and regularisation ---------------------------------------


def softmax(x, mask=None, axis=-1):
    """Max-shifted softmax along ``axis``; masked-out positions get exactly 0."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] < 1:
        raise ShapeError(f"softmax needs a non-empty axis, got shape {x.shape}")
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not np.all(np.any(mask, axis=axis)):
            raise InvalidMaskError("every position along the softmax axis is masked")
        z = np.where(mask, z, -np.inf)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        x._add_grad(data * (g - np.sum(g * data, axis=axis, keepdims=True)))

    return _node(data, (x,), backward)


def dropout(x, rate, training, rng):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)
