"""Dense float32 tensors with reverse-mode gradients.

A deliberately small op set (matmul, add/sub/mul with broadcasting, tanh,
sigmoid, concat, narrow, sum, square_sum, scale) covers every model in the
package, so one finite-difference suite certifies all of them. Values are
32-bit throughout; backward() seeds from a scalar and accumulates into
``grad`` until ``zero_grad`` is called.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "concat",
    "narrow",
    "sum_all",
    "square_sum",
]


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    return arr


class Tensor:
    """A node in the computation graph.

    ``data`` is a row-major float32 ndarray. ``grad`` (same shape) appears
    after a backward pass touches this node. Results of ops record their
    parents only while some input requires gradients, so frozen-model
    inference builds no graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f32(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(np.float32, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Propagate d(self)/d(param) to every tracked parameter.

        ``self`` must hold a single scalar; repeated calls accumulate.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() needs a scalar seed, got shape {self.data.shape}"
            )
        order = _toposort(self)
        self._accumulate(np.ones_like(self.data))
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _toposort(root: Tensor):
    """Reverse topological order, iterative so deep unrolled graphs are safe."""
    order = []
    seen = set()
    stack = [(root, False)]
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
    order.reverse()
    return order


def _tracks(*xs: Tensor) -> bool:
    return any(x.requires_grad or x._parents for x in xs)


def _attach(out: Tensor, parents, backward):
    out._parents = tuple(parents)
    out._backward = backward
    out.requires_grad = True


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum-reduce a gradient back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(np.float32, copy=False)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    if _tracks(a, b):
        def backward(g):
            if a.requires_grad or a._parents:
                a._accumulate(g @ b.data.T)
            if b.requires_grad or b._parents:
                b._accumulate(a.data.T @ g)
        _attach(out, (a, b), backward)
    return out


def _ewise_shape_check(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname} cannot broadcast {a.shape} with {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _ewise_shape_check(a, b, "add")
    out = Tensor(a.data + b.data)
    if _tracks(a, b):
        def backward(g):
            if a.requires_grad or a._parents:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad or b._parents:
                b._accumulate(_unbroadcast(g, b.shape))
        _attach(out, (a, b), backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _ewise_shape_check(a, b, "sub")
    out = Tensor(a.data - b.data)
    if _tracks(a, b):
        def backward(g):
            if a.requires_grad or a._parents:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad or b._parents:
                b._accumulate(_unbroadcast(-g, b.shape))
        _attach(out, (a, b), backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _ewise_shape_check(a, b, "mul")
    out = Tensor(a.data * b.data)
    if _tracks(a, b):
        def backward(g):
            if a.requires_grad or a._parents:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad or b._parents:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        _attach(out, (a, b), backward)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s32 = np.float32(s)
    out = Tensor(a.data * s32)
    if _tracks(a):
        def backward(g):
            a._accumulate(g * s32)
        _attach(out, (a,), backward)
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    if _tracks(a):
        def backward(g):
            a._accumulate(g * (1.0 - y * y))
        _attach(out, (a,), backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so large magnitudes stay finite in float32
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)
    if _tracks(a):
        def backward(g):
            a._accumulate(g * y * (1.0 - y))
        _attach(out, (a,), backward)
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    if _tracks(*tensors):
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def backward(g):
            pieces = np.split(g, splits, axis=axis)
            for t, piece in zip(tensors, pieces):
                if t.requires_grad or t._parents:
                    t._accumulate(piece)
        _attach(out, tensors, backward)
    return out


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    n = a.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"narrow [{start}:{stop}] outside axis of size {n}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(a.data[idx].copy())
    if _tracks(a):
        def backward(g):
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accumulate(full)
        _attach(out, (a,), backward)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(dtype=np.float32))
    if _tracks(a):
        def backward(g):
            a._accumulate(np.broadcast_to(g, a.shape))
        _attach(out, (a,), backward)
    return out


def square_sum(a: Tensor) -> Tensor:
    """Sum of squared entries, the building block of every loss here."""
    out = Tensor(np.sum(a.data * a.data, dtype=np.float32))
    if _tracks(a):
        def backward(g):
            a._accumulate(g * 2.0 * a.data)
        _attach(out, (a,), backward)
    return out
