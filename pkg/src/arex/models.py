"""Predictive models with the derivative information explanations need.

Every model maps a covariate ``(d,)`` to a float and a batch ``(n, d)`` to an
``(n,)`` array.  ``gradient`` and ``hessian`` take a single point.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericDivergenceError, ShapeError
from .numkit import MLP, Tensor, input_gradient


def _as_points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ShapeError(f"expected dimension {dim}, got {x.shape[-1]}")
    return x


class Polynomial:
    """One-dimensional polynomial ``sum_k coef[k] * x**k``."""

    dim = 1

    def __init__(self, coefficients):
        self.coefficients = np.trim_zeros(np.asarray(coefficients, dtype=np.float64), "b")
        if self.coefficients.size == 0:
            self.coefficients = np.zeros(1)

    def __repr__(self):
        return f"Polynomial({self.coefficients.tolist()})"

    def _eval(self, t):
        out = np.zeros_like(t)
        for c in self.coefficients[::-1]:
            out = out * t + c
        return out

    def __call__(self, x):
        x = _as_points(x, 1)
        v = self._eval(x[..., 0])
        return float(v) if x.ndim == 1 else v

    def derivative(self):
        k = np.arange(1, self.coefficients.size)
        return Polynomial(self.coefficients[1:] * k if k.size else [0.0])

    def gradient(self, x):
        return np.array([self.derivative()(x)])

    def hessian(self, x):
        return np.array([[self.derivative().derivative()(x)]])


class Quadratic:
    """``g(x) = x^T A x + b^T x + c`` (A symmetrized on construction)."""

    def __init__(self, A, b, c=0.0):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.A = 0.5 * (A + A.T)
        self.b = np.asarray(b, dtype=np.float64).reshape(-1)
        self.c = float(c)
        self.dim = self.b.size
        if self.A.shape != (self.dim, self.dim):
            raise ShapeError("A must be d x d with d = len(b)")

    def __call__(self, x):
        x = _as_points(x, self.dim)
        v = np.einsum("...i,ij,...j->...", x, self.A, x) + x @ self.b + self.c
        return float(v) if x.ndim == 1 else v

    def gradient(self, x):
        x = _as_points(x, self.dim)
        return 2.0 * self.A @ x + self.b

    def hessian(self, x):
        return 2.0 * self.A


class NetworkModel:
    """Wraps an :class:`~arex.numkit.MLP` with a scalar head."""

    def __init__(self, net: MLP, fd_step=1e-4):
        if net.out_dim != 1:
            raise ShapeError("a predictive model needs a scalar output")
        self.net = net
        self.dim = net.in_dim
        self.fd_step = fd_step

    def __call__(self, x):
        return self.net(_as_points(x, self.dim))

    def gradient(self, x):
        return input_gradient(self.net, _as_points(x, self.dim))[0]

    def hessian(self, x):
        # Central differences of the exact (autodiff) gradient.
        x = _as_points(x, self.dim)
        h = self.fd_step
        H = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            H[:, i] = (self.gradient(x + e) - self.gradient(x - e)) / (2.0 * h)
        H = 0.5 * (H + H.T)
        if not np.all(np.isfinite(H)):
            raise NumericDivergenceError("non-finite Hessian estimate")
        return H


class FunctionModel:
    """Any vectorized callable; derivatives by central differences."""

    def __init__(self, fn, dim, step=1e-5):
        self.fn = fn
        self.dim = dim
        self.step = step

    def __call__(self, x):
        x = _as_points(x, self.dim)
        if x.ndim == 1:
            return float(self.fn(x[None, :])[0])
        return np.asarray(self.fn(x), dtype=np.float64)

    def gradient(self, x):
        x = _as_points(x, self.dim)
        h = self.step
        eye = np.eye(self.dim) * h
        return np.array([(self(x + e) - self(x - e)) / (2 * h) for e in eye])

    def hessian(self, x):
        x = _as_points(x, self.dim)
        h = 1e-4
        eye = np.eye(self.dim) * h
        H = np.array([(self.gradient(x + e) - self.gradient(x - e)) / (2 * h) for e in eye])
        return 0.5 * (H + H.T)


def quartic():
    """``x^4 - x^2 + 1``, the model of the no-harm experiment."""
    return Polynomial([1.0, 0.0, -1.0, 0.0, 1.0])


def batch_gradient(model, X):
    """Gradient of ``model`` at every row of ``X`` (``(n, d)`` -> ``(n, d)``)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(model, Polynomial):
        return np.asarray(model.derivative()(X), dtype=np.float64).reshape(-1, 1)
    if isinstance(model, Quadratic):
        return 2.0 * X @ model.A + model.b
    if isinstance(model, NetworkModel):
        return input_gradient(model.net, X)
    if isinstance(model, MLP) or hasattr(model, "forward"):
        return input_gradient(model, X)
    return np.array([model.gradient(x) for x in X])


def value_and_input_gradient(model, X):
    """``(model(X), batch_gradient(model, X))``, sharing one taped pass for networks."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    net = model.net if isinstance(model, NetworkModel) else model
    if hasattr(net, "value_and_grad") and getattr(net, "out_dim", None) == 1:
        return net.value_and_grad(X)
    if hasattr(net, "forward") and getattr(net, "out_dim", None) == 1:
        xt = Tensor(X, requires_grad=True)
        out = net.forward(xt)
        out.sum().backward()
        return out.value[:, 0].copy(), xt.grad
    return np.asarray(model(X), dtype=np.float64), batch_gradient(model, X)
