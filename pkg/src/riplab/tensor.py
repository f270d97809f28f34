"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` records a node
holding its parents and a backward rule.  Nodes carry a monotonically
increasing sequence number, so creation order is a valid topological order
and :meth:`Tensor.backward` replays the graph by sorting on it.
"""
from __future__ import annotations

import contextlib
import contextvars
import itertools
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

_grad_mode = contextvars.ContextVar("riplab_grad_mode", default=True)
_seq = itertools.count()


class GraphError(RuntimeError):
    """Misuse of the autodiff graph (non-scalar loss, double backward)."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


@contextlib.contextmanager
def no_grad():
    token = _grad_mode.set(False)
    try:
        yield
    finally:
        _grad_mode.reset(token)


def is_grad_enabled() -> bool:
    return _grad_mode.get()


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "_seq", "_released")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self._op = ""
        self._seq = next(_seq)
        self._released = False

    # -- construction -------------------------------------------------------

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._backward = None
        t._op = ""
        t._seq = next(_seq)
        t._released = False
        return t

    @staticmethod
    def zeros(*shape) -> "Tensor":
        return Tensor._wrap(np.zeros(shape))

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self._op or 'leaf'})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- autodiff -----------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._released:
            raise GraphError("graph already consumed by an earlier backward(); run the forward pass again")
        if not self.requires_grad:
            raise GraphError("loss does not depend on any tensor that requires grad")

        nodes = []
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append(p)
        nodes.sort(key=lambda n: n._seq, reverse=True)

        self.grad = np.ones_like(self.data) if self.grad is None else self.grad + 1.0
        for node in nodes:
            if node._backward is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            grads = node._backward(node.grad)
            for p, g in zip(node._parents, grads):
                if g is None or not p.requires_grad:
                    continue
                p.grad = g if p.grad is None else p.grad + g
        for node in nodes:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                node._released = True

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return custom_op(self.data + other.data, (self, other),
                         lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return custom_op(self.data - other.data, (self, other),
                         lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __neg__(self):
        return custom_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data

        def back(g):
            return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

        return custom_op(x * y, (self, other), back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data

        def back(g):
            return _unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)

        return custom_op(x / y, (self, other), back, "div")

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, k: float):
        if isinstance(k, Tensor):
            raise TypeError("only scalar exponents are supported")
        x = self.data
        return custom_op(x ** k, (self,), lambda g: (g * k * x ** (k - 1),), "pow")

    def __matmul__(self, other):
        return matmul(self, other)

    # -- elementwise --------------------------------------------------------

    def exp(self):
        out = np.exp(self.data)
        return custom_op(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        x = self.data
        return custom_op(np.log(x), (self,), lambda g: (g / x,), "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return custom_op(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def tanh(self):
        out = np.tanh(self.data)
        return custom_op(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self):
        out = _sigmoid(self.data)
        return custom_op(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def relu(self):
        x = self.data
        return custom_op(np.maximum(x, 0.0), (self,), lambda g: (g * (x > 0),), "relu")

    # -- reductions and shape -----------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return custom_op(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return custom_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return custom_op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")

    def swapaxes(self, a: int, b: int):
        return custom_op(self.data.swapaxes(a, b), (self,), lambda g: (g.swapaxes(a, b),), "swapaxes")

    @property
    def T(self):
        return self.transpose()

    def unsqueeze(self, axis: int):
        old = self.shape
        return custom_op(np.expand_dims(self.data, axis), (self,), lambda g: (g.reshape(old),), "unsqueeze")

    def cumsum(self, axis: int):
        def back(g):
            return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

        return custom_op(np.cumsum(self.data, axis=axis), (self,), back, "cumsum")

    def __getitem__(self, idx):
        shape = self.shape
        basic = _is_basic_index(idx)

        def back(g):
            full = np.zeros(shape)
            if basic:
                full[idx] = g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return custom_op(np.array(self.data[idx]), (self,), back, "getitem")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, name: str = "op") -> Tensor:
    """Wrap ``data`` as the output of an operation on ``parents``.

    ``backward`` maps the output gradient to a tuple with one gradient (or
    ``None``) per parent.  Nothing is recorded when grad mode is off or no
    parent requires grad.
    """
    out = Tensor._wrap(np.asarray(data, dtype=np.float64))
    if _grad_mode.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = name
    return out


# -- free functions -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data
    if x.ndim > 2 and y.ndim == 2:
        # fold leading axes into one BLAS call
        x2 = x.reshape(-1, x.shape[-1])

        def back2(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ y.T).reshape(x.shape), x2.T @ g2

        return custom_op((x2 @ y).reshape(x.shape[:-1] + (y.shape[-1],)), (a, b), back2, "matmul")

    # stacked matmul only reaches BLAS on contiguous operands
    x, y = np.ascontiguousarray(x), np.ascontiguousarray(y)

    def back(g):
        g = np.ascontiguousarray(g)
        ga = g @ np.ascontiguousarray(np.swapaxes(y, -1, -2))
        gb = np.ascontiguousarray(np.swapaxes(x, -1, -2)) @ g
        return _unbroadcast(ga, x.shape), _unbroadcast(gb, y.shape)

    return custom_op(x @ y, (a, b), back, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return custom_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, back, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return custom_op(np.stack([t.data for t in tensors], axis=axis), tensors, back, "stack")


def where(mask: np.ndarray, a: Tensor, b) -> Tensor:
    """Select ``a`` where ``mask`` holds, else ``b``; ``mask`` is a constant."""
    a = _as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if isinstance(b, Tensor):
        def back(g):
            return _unbroadcast(np.where(mask, g, 0.0), a.shape), _unbroadcast(np.where(mask, 0.0, g), b.shape)

        return custom_op(np.where(mask, a.data, b.data), (a, b), back, "where")

    def back1(g):
        return (_unbroadcast(np.where(mask, g, 0.0), a.shape),)

    return custom_op(np.where(mask, a.data, b), (a,), back1, "where")


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               max_per_input: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``f(*inputs)`` must return a scalar tensor.  Relative error per element is
    ``|a - n| / max(|a|, |n|, 1e-8)``.  ``max_per_input`` limits the number of
    probed elements per input (chosen with ``rng``) for large parameter sets.
    """
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    loss = f(*inputs)
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    with no_grad():
        for t, a in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            if not np.shares_memory(flat, t.data):
                raise ValueError("grad_check needs contiguous input buffers")
            idx = np.arange(flat.size)
            if max_per_input is not None and flat.size > max_per_input:
                idx = np.sort(rng.choice(flat.size, size=max_per_input, replace=False))
            a_flat = a.reshape(-1)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                fp = f(*inputs).item()
                flat[i] = orig - eps
                fm = f(*inputs).item()
                flat[i] = orig
                num = (fp - fm) / (2.0 * eps)
                err = abs(a_flat[i] - num) / max(abs(a_flat[i]), abs(num), 1e-8)
                worst = max(worst, err)
    for t in inputs:
        t.grad = None
    return worst
