"""Minimal reverse-mode automatic differentiation over numpy arrays.

Each :class:`Tensor` produced by an operation remembers its parents and a
closure that maps the output gradient to parent gradients.  Calling
:func:`backward` on a scalar walks the graph in reverse topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in a forward or backward pass."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make numpy defer to Tensor's reflected operators (ndarray - Tensor -> Tensor.__rsub__)
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward_fn
        self.name = name

    # -- construction helpers -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(ensure(other)))

    def __rsub__(self, other):
        return add(ensure(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = ensure(other)
        if not other.requires_grad:
            return mul(self, Tensor(1.0 / other.data))
        return mul(self, reciprocal(other))

    def __rtruediv__(self, other):
        return mul(ensure(other), reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self) -> None:
        backward(self)


def ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, fn) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=fn)
    return Tensor(data)


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = ensure(a), ensure(b)
    sa, sb = a.shape, b.shape
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = ensure(a), ensure(b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def reciprocal(a: Tensor) -> Tensor:
    with np.errstate(divide="raise", invalid="raise", over="raise"):
        out = 1.0 / a.data
    return _make(out, (a,), lambda g: (-g * out * out,))


def power(a: Tensor, exponent: float) -> Tensor:
    ad = a.data
    if exponent == 2:
        return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,))
    with np.errstate(divide="raise", invalid="raise", over="raise"):
        out = ad**exponent
    return _make(out, (a,), lambda g: (g * exponent * ad ** (exponent - 1),))


def square(a: Tensor) -> Tensor:
    return power(a, 2)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="raise", invalid="raise"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="raise", invalid="raise"):
        out = np.log(ad)
    return _make(out, (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    out = np.logaddexp(0.0, ad)
    return _make(out, (a,), lambda g: (g * _sigmoid(ad),))


def silu(a: Tensor) -> Tensor:
    """Swish activation x * sigmoid(x)."""
    ad = a.data
    s = _sigmoid(ad)
    out = ad * s
    return _make(out, (a,), lambda g: (g * (s + out * (1.0 - s)),))


def minimum(a, b) -> Tensor:
    a, b = ensure(a), ensure(b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)
    sa, sb = a.shape, b.shape
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, sa), _unbroadcast(g * ~pick_a, sb)),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- reductions and shape ops --------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def matmul(a, b) -> Tensor:
    """Matrix product; supports 2-D and batched 3-D operands."""
    a, b = ensure(a), ensure(b)
    ad, bd = a.data, b.data

    def fn(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), fn)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [ensure(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, fn)


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def fn(g):
        out = np.zeros(shape)
        np.add.at(out, index, g) if _is_fancy(index) else out.__setitem__(index, g)
        return (out,)

    return _make(a.data[index], (a,), fn)


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


# -- losses --------------------------------------------------------------------

def gaussian_nll(mean_: Tensor, log_var: Tensor, target) -> Tensor:
    """Elementwise negative log density of ``target`` under N(mean, exp(log_var))."""
    target = ensure(target)
    diff = mean_ - target
    return 0.5 * (square(diff) * exp(neg(log_var)) + log_var + LOG_2PI)


# -- backward pass ---------------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return None


def grad(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` with respect to ``params`` (zeros if unreachable).

    Existing ``.grad`` buffers on ``params`` are reset first.
    """
    params = list(params)
    for p in params:
        p.grad = None
    backward(loss)
    out = []
    for p in params:
        g = np.zeros_like(p.data) if p.grad is None else np.asarray(p.grad, dtype=np.float64)
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {p.name or p.shape}")
        out.append(g)
    return out
