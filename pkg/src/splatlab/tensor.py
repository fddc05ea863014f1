"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

Each operation records its parents and a vector-Jacobian rule on a dynamic
tape, so graphs are rebuilt on every forward pass. Broadcasting follows numpy;
gradients are summed back to the operand shape.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "GradientError",
    "Tensor",
    "as_tensor",
    "concatenate",
    "cumsum",
    "exp",
    "log",
    "maximum",
    "minimum",
    "no_grad_data",
    "sqrt",
    "stack",
    "where",
]

# sqrt(0) has an infinite derivative; the guard makes it 0 at exactly 0, which
# is what a symmetric finite difference reports at a cone point.
_SQRT_FLOOR = 1e-300


class GradientError(ValueError):
    """Raised on misuse of the differentiation contract."""


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
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
    """A float64 array that remembers how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")
    __array_priority__ = 100.0

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        op: str = "",
    ):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr if arr.flags.c_contiguous else arr.copy()
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp
        self.op = op

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{tag})"

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction ------------------------------------------------
    @staticmethod
    def _make(data, parents, vjp, op) -> "Tensor":
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, tuple(parents), vjp, op)
        return Tensor(data)

    # -- backward ----------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf.

        Gradients add onto whatever is already stored, so two calls without
        ``zero_grad`` double the result.
        """
        if self.size != 1:
            raise GradientError(
                f"backward() needs a scalar output, got shape {self.shape}"
            )
        if not self.requires_grad:
            return

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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(
            self.data + other.data, (self, other), lambda g: (g, g), "add"
        )

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(
            self.data - other.data, (self, other), lambda g: (g, -g), "sub"
        )

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        out = a / b
        return Tensor._make(
            out, (self, other), lambda g: (g / b, -g * out / b), "div"
        )

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        e = float(exponent)
        a = self.data
        if e == 2.0:
            return Tensor._make(a * a, (self,), lambda g: (2.0 * a * g,), "square")
        return Tensor._make(
            a**e, (self,), lambda g: (e * a ** (e - 1.0) * g,), f"pow{e:g}"
        )

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")

        def vjp(g):
            return g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g

        return Tensor._make(a @ b, (self, other), vjp, "matmul")

    def __rmatmul__(self, other) -> "Tensor":
        return as_tensor(other) @ self

    # -- elementwise functions ---------------------------------------------
    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        a = self.data
        return Tensor._make(np.log(a), (self,), lambda g: (g / a,), "log")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)

        def vjp(g):
            safe = np.where(out > _SQRT_FLOOR, out, np.inf)
            return (0.5 * g / safe,)

        return Tensor._make(out, (self,), vjp, "sqrt")

    def sigmoid(self) -> "Tensor":
        out = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        return Tensor._make(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")

    def abs(self) -> "Tensor":
        s = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * s,), "abs")

    # -- reductions --------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(
            self.data.sum(axis=axis, keepdims=keepdims), (self,), vjp, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- shape manipulation ------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor._make(
            self.data.transpose(axes),
            (self,),
            lambda g: (g.transpose(inverse),),
            "transpose",
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return Tensor._make(
            np.swapaxes(self.data, a, b),
            (self,),
            lambda g: (np.swapaxes(g, a, b),),
            "swapaxes",
        )

    def __getitem__(self, index) -> "Tensor":
        if isinstance(index, Tensor):
            index = index.data.astype(np.intp)
        shape = self.shape

        def vjp(g):
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), vjp, "getitem")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def no_grad_data(x) -> np.ndarray:
    """Return the raw array behind ``x`` (Tensor or array-like)."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def exp(x) -> Tensor:
    return as_tensor(x).exp()


def log(x) -> Tensor:
    return as_tensor(x).log()


def sqrt(x) -> Tensor:
    return as_tensor(x).sqrt()


def where(cond, a, b) -> Tensor:
    """Select from ``a`` where ``cond`` holds, else ``b``. ``cond`` is a gate."""
    cond = np.asarray(no_grad_data(cond), dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(
        np.where(cond, a.data, b.data),
        (a, b),
        lambda g: (np.where(cond, g, 0.0), np.where(cond, 0.0, g)),
        "where",
    )


def maximum(x, floor: float) -> Tensor:
    """Elementwise max against a constant; the gradient passes where x wins."""
    x = as_tensor(x)
    keep = x.data >= floor
    return Tensor._make(
        np.where(keep, x.data, floor), (x,), lambda g: (g * keep,), "maximum"
    )


def minimum(x, ceil: float) -> Tensor:
    x = as_tensor(x)
    keep = x.data <= ceil
    return Tensor._make(
        np.where(keep, x.data, ceil), (x,), lambda g: (g * keep,), "minimum"
    )


def cumsum(x, axis: int) -> Tensor:
    x = as_tensor(x)

    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return Tensor._make(np.cumsum(x.data, axis=axis), (x,), vjp, "cumsum")


def stack(items: Iterable, axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    n = len(items)

    def vjp(g):
        return [np.take(g, i, axis=axis) for i in range(n)]

    return Tensor._make(
        np.stack([t.data for t in items], axis=axis), tuple(items), vjp, "stack"
    )


def concatenate(items: Iterable, axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    bounds = np.cumsum([t.shape[axis] for t in items])[:-1]

    def vjp(g):
        return np.split(g, bounds, axis=axis)

    return Tensor._make(
        np.concatenate([t.data for t in items], axis=axis), tuple(items), vjp, "concat"
    )
