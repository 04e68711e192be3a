"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` records the operation that produced it together with a
closure that pushes adjoints back to its parents.  Calling
:meth:`Tensor.backward` on a scalar output orders the recorded graph
topologically and visits every node once.

Only a small set of primitives is supported: affine maps (add, subtract,
matmul, scaling), elementwise multiply, ReLU, logistic, square, log, sum/mean,
a smoothed absolute value, concatenation and reshape.  Anything else raises
:class:`~arex.errors.CapabilityError` instead of silently dropping gradients.
"""

from __future__ import annotations

import numpy as np

from ..errors import CapabilityError, ShapeError

_ALLOWED_UFUNC_MSG = (
    "numpy ufunc {name!r} is not a supported primitive; use Tensor methods "
    "(relu, sigmoid, log, square, abs_smooth, sum, mean)"
)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (undo numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Topologically ordered record of one forward pass, output first."""

    def __init__(self, nodes):
        self.nodes = nodes
        self.visits = {id(n): 0 for n in nodes}

    def __len__(self):
        return len(self.nodes)

    def run(self, output):
        output.grad = np.ones_like(output.value)
        for node in self.nodes:
            self.visits[id(node)] += 1
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor({self.value!r})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # numpy scalars/arrays on the left land here; route the affine ops back.
        if method == "__call__" and not kwargs and len(inputs) == 2:
            a, b = (Tensor._lift(v) for v in inputs)
            if ufunc is np.add:
                return a + b
            if ufunc is np.subtract:
                return a - b
            if ufunc is np.multiply:
                return a * b
            if ufunc is np.matmul:
                return a @ b
        raise CapabilityError(_ALLOWED_UFUNC_MSG.format(name=ufunc.__name__))

    def __array__(self, dtype=None, copy=None):
        raise CapabilityError("converting a Tensor to an array would drop its gradient")

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g if self.grad is None else self.grad + g

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _lift(other):
        if isinstance(other, Tensor):
            return other
        if isinstance(other, (int, float, np.ndarray, np.floating, np.integer)):
            return Tensor(other)
        raise CapabilityError(f"cannot combine Tensor with {type(other).__name__}")

    def __add__(self, other):
        other = self._lift(other)
        out_value = self.value + other.value

        def backward(g):
            self._accumulate(_unbroadcast(g, self.value.shape))
            other._accumulate(_unbroadcast(g, other.value.shape))

        return Tensor(out_value, _parents=(self, other), _backward=backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor(-self.value, _parents=(self,), _backward=backward)

    def __sub__(self, other):
        other = self._lift(other)
        out_value = self.value - other.value

        def backward(g):
            self._accumulate(_unbroadcast(g, self.value.shape))
            other._accumulate(_unbroadcast(-g, other.value.shape))

        return Tensor(out_value, _parents=(self, other), _backward=backward)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out_value = self.value * other.value

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.value, self.value.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.value, other.value.shape))

        return Tensor(out_value, _parents=(self, other), _backward=backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise CapabilityError("division by a Tensor is not a supported primitive")
        return self * (1.0 / float(other))

    def __pow__(self, exponent):
        if exponent == 2:
            return self.square()
        raise CapabilityError("only square (exponent 2) is supported")

    def __matmul__(self, other):
        other = self._lift(other)
        if self.value.ndim != 2 or other.value.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if self.value.shape[1] != other.value.shape[0]:
            raise ShapeError(
                f"matmul shape mismatch {self.value.shape} @ {other.value.shape}"
            )
        out_value = self.value @ other.value

        def backward(g):
            # skip the products constants would throw away
            if self.requires_grad:
                self._accumulate(g @ other.value.T)
            if other.requires_grad:
                other._accumulate(self.value.T @ g)

        return Tensor(out_value, _parents=(self, other), _backward=backward)

    def relu(self):
        out_value = np.maximum(self.value, 0.0)

        def backward(g):
            self._accumulate(g * (out_value > 0))

        return Tensor(out_value, _parents=(self,), _backward=backward)

    def sigmoid(self):
        out_value = logistic(self.value)

        def backward(g):
            self._accumulate(g * out_value * (1.0 - out_value))

        return Tensor(out_value, _parents=(self,), _backward=backward)

    def square(self):
        def backward(g):
            self._accumulate(2.0 * g * self.value)

        return Tensor(self.value * self.value, _parents=(self,), _backward=backward)

    def log(self):
        def backward(g):
            self._accumulate(g / self.value)

        with np.errstate(divide="ignore", invalid="ignore"):
            out_value = np.log(self.value)
        return Tensor(out_value, _parents=(self,), _backward=backward)

    def abs_smooth(self, eps=1e-12):
        """sqrt(x^2 + eps): differentiable everywhere, slope 0 at 0."""
        out_value = np.sqrt(self.value * self.value + eps)

        def backward(g):
            self._accumulate(g * self.value / out_value)

        return Tensor(out_value, _parents=(self,), _backward=backward)

    def sum(self, axis=None, keepdims=False):
        shape = self.value.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, shape).copy())

        return Tensor(
            self.value.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=backward
        )

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.value.shape

        def backward(g):
            self._accumulate(g.reshape(old))

        return Tensor(self.value.reshape(*shape), _parents=(self,), _backward=backward)

    # -- reverse pass -------------------------------------------------------

    def backward(self):
        """Propagate adjoints from this scalar to every recorded ancestor.

        Returns the :class:`Tape` used, so callers can inspect visit counts.
        """
        if self.value.size != 1:
            raise ShapeError("backward() needs a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        order.reverse()
        tape = Tape(order)
        tape.run(self)
        return tape


def dense_value(x, w, b, relu):
    """``x @ w + b`` optionally followed by ReLU, on plain arrays."""
    out = x @ w
    out += b
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def dense(x, w, b, relu=False):
    """Fused affine map (and ReLU) with a single tape node.

    Values match :func:`dense_value` bitwise.  The ReLU subgradient at 0 is 0.
    """
    x, w, b = Tensor._lift(x), Tensor._lift(w), Tensor._lift(b)
    if x.value.ndim != 2 or w.value.ndim != 2:
        raise ShapeError("dense expects 2-D input and weight")
    if x.value.shape[1] != w.value.shape[0]:
        raise ShapeError(f"matmul shape mismatch {x.value.shape} @ {w.value.shape}")
    out_value = dense_value(x.value, w.value, b.value, relu)

    def backward(g):
        if relu:
            g = g * (out_value > 0)
        if x.requires_grad:
            x._accumulate(g @ w.value.T)
        if w.requires_grad:
            w._accumulate(x.value.T @ g)
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.value.shape))

    return Tensor(out_value, _parents=(x, w, b), _backward=backward)


def concat(tensors, axis=-1):
    tensors = [Tensor._lift(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(piece)

    return Tensor(
        np.concatenate([t.value for t in tensors], axis=axis),
        _parents=tuple(tensors),
        _backward=backward,
    )


def clip(x, lower, upper):
    """Clamp to ``[lower, upper]`` written with ReLUs, so it stays on the tape."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    return (x - lower).relu() - (x - upper).relu() + lower


def logistic(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def value_and_grad(f, *inputs):
    """Evaluate ``f`` on ``inputs`` and return ``(value, [df/dinput, ...])``.

    Inputs not connected to the output receive an all-zero gradient.
    """
    leaves = [Tensor(np.array(x, dtype=np.float64, copy=True), requires_grad=True) for x in inputs]
    out = f(*leaves)
    if not isinstance(out, Tensor):
        raise CapabilityError("f must return a Tensor built from its inputs")
    if out.requires_grad:
        out.backward()
    grads = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves
    ]
    return float(out.value.reshape(())), grads


def grad(f, *inputs):
    return value_and_grad(f, *inputs)[1]


def finite_difference(f, x, h=1e-5):
    """Central differences of scalar ``f`` w.r.t. array ``x`` (plain numpy)."""
    x = np.array(x, dtype=np.float64, copy=True)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    out_flat = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        out_flat[i] = (up - down) / (2.0 * h)
    return out
