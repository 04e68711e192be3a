"""Networks with frozen input/output standardization, and a training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericDivergenceError, ShapeError
from ..numkit import MLP, Adam, Tensor


@dataclass
class ScaledNet:
    """``y_shift + y_scale * mlp((x - x_shift) / x_scale)``.

    The affine maps are fixed when the network is created, so only the MLP
    parameters are trained.
    """

    net: MLP
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: np.ndarray
    y_scale: np.ndarray

    @classmethod
    def create(cls, x_sample, out_dim=1, y_sample=None, hidden=32, head="linear", seed=0):
        x_sample = np.atleast_2d(np.asarray(x_sample, dtype=np.float64))
        x_shift = x_sample.mean(axis=0)
        x_scale = x_sample.std(axis=0)
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
        if y_sample is None or head == "sigmoid":
            y_shift, y_scale = np.zeros(out_dim), np.ones(out_dim)
        else:
            y = np.asarray(y_sample, dtype=np.float64).reshape(len(y_sample), -1)
            y_shift = y.mean(axis=0)
            y_scale = y.std(axis=0)
            y_scale = np.where(y_scale > 0, y_scale, 1.0)
        net = MLP.init(x_sample.shape[1], out_dim, hidden=hidden, head=head, seed=seed)
        return cls(net, x_shift, x_scale, y_shift, y_scale)

    @property
    def in_dim(self):
        return self.net.in_dim

    @property
    def out_dim(self):
        return self.net.out_dim

    @property
    def head(self):
        return self.net.head

    def params(self):
        return self.net.params()

    def with_params(self, params):
        return ScaledNet(self.net.with_params(params), self.x_shift, self.x_scale, self.y_shift, self.y_scale)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input dimension {self.in_dim}, got {x.shape[-1]}")
        single = x.ndim == 1
        out = self.forward(Tensor(np.atleast_2d(x))).value
        if self.out_dim == 1:
            out = out[:, 0]
            return float(out[0]) if single else out
        return out[0] if single else out

    def forward(self, x, params=None):
        if not isinstance(x, Tensor):
            x = Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        h = (x - self.x_shift) * (1.0 / self.x_scale)
        out = self.net.forward(h, params)
        if self.head == "sigmoid":
            return out
        return out * self.y_scale + self.y_shift

    def value_and_grad(self, x):
        """Tape-free values and input gradients of a scalar network."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inv = 1.0 / self.x_scale
        out, g = self.net.value_and_grad((x - self.x_shift) * inv)
        g = g * inv
        if self.head == "sigmoid":
            return out, g
        return out * self.y_scale[0] + self.y_shift[0], g * self.y_scale[0]


class ConstantClassifier:
    """Compliance predictor used when every label is identical."""

    degenerate = True

    def __init__(self, p):
        self.p = float(p)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.full(x.shape[0], self.p)

    def forward(self, x, params=None):
        n = x.value.shape[0] if isinstance(x, Tensor) else np.atleast_2d(x).shape[0]
        return Tensor(np.full((n, 1), self.p))

    def params(self):
        return []


def minimize(loss_fn, params, steps, lr=1e-3, optimizer=None, on_step=None):
    """Adam on ``loss_fn(param_tensors) -> scalar Tensor``.

    Returns ``(params, losses)``; ``losses[k]`` is the loss before step k.
    """
    opt = optimizer or Adam(lr=lr)
    params = [np.array(p, dtype=np.float64, copy=True) for p in params]
    losses = []
    for step in range(steps):
        leaves = [Tensor(p, requires_grad=True) for p in params]
        loss = loss_fn(leaves, step)
        value = float(loss.value)
        if not np.isfinite(value):
            raise NumericDivergenceError("non-finite training loss", iteration=step)
        losses.append(value)
        loss.backward()
        grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves]
        params = opt.step(params, grads)
        if on_step is not None:
            on_step(step, value)
    return params, losses


def squared_loss(pred, target):
    return (pred - target).square().mean()


def bce_loss(prob, target, weights=None, eps=1e-7):
    """Mean (optionally class-weighted) binary cross-entropy on a Tensor of probabilities."""
    target = np.asarray(target, dtype=np.float64).reshape(prob.value.shape)
    pos = (prob + eps).log() * target
    neg = (1.0 + eps - prob).log() * (1.0 - target)
    if weights is not None:
        w0, w1 = weights
        pos = pos * w1
        neg = neg * w0
    return -(pos + neg).mean()


def fit_network(net, X, Y, loss="squared", steps=2000, lr=1e-3, batch_size=None, seed=0, weights=None):
    """Train ``net`` (ScaledNet or MLP) on ``(X, Y)``; returns ``(net, losses)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], -1)
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    n = X.shape[0]

    def loss_fn(leaves, step):
        if batch_size is None or batch_size >= n:
            xb, yb = X, Y
        else:
            idx = rng.integers(0, n, size=batch_size)
            xb, yb = X[idx], Y[idx]
        out = net.forward(Tensor(xb), leaves)
        if loss == "squared":
            return squared_loss(out, yb)
        return bce_loss(out, yb, weights)

    params, losses = minimize(loss_fn, net.params(), steps, lr)
    return net.with_params(params), losses
