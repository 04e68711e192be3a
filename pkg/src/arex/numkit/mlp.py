"""Three-hidden-layer ReLU perceptrons.

The same expressions back both the plain numpy forward pass and the taped
one, so a prediction made outside training is bitwise identical to the value
seen inside a gradient computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .autodiff import Tensor, dense, dense_value, logistic

HEADS = ("linear", "sigmoid")


@dataclass
class MLP:
    """``in -> h -> h -> h -> out`` with ReLU between the affine maps.

    ``weights[k]`` has shape ``(fan_in, fan_out)``.  A ``"sigmoid"`` head
    squashes the output into (0, 1).
    """

    weights: list
    biases: list
    head: str = "linear"
    _scalar: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if len(self.weights) != 4 or len(self.biases) != 4:
            raise ShapeError("an MLP has exactly 3 hidden layers (4 affine maps)")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {k} does not chain onto layer {k - 1}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite parameters")
        self._scalar = self.out_dim == 1

    @classmethod
    def init(cls, in_dim, out_dim=1, hidden=32, head="linear", seed=0):
        """He-initialized network; biases start at zero."""
        rng = np.random.default_rng(seed)
        dims = [in_dim, hidden, hidden, hidden, out_dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, head=head)

    @classmethod
    def zeros(cls, in_dim, out_dim=1, hidden=32, head="linear"):
        dims = [in_dim, hidden, hidden, hidden, out_dim]
        return cls(
            [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
            [np.zeros(b) for b in dims[1:]],
            head=head,
        )

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_params(self, params):
        params = list(params)
        return MLP(
            [np.asarray(p, dtype=np.float64) for p in params[0::2]],
            [np.asarray(p, dtype=np.float64) for p in params[1::2]],
            head=self.head,
        )

    def copy(self):
        return self.with_params([p.copy() for p in self.params()])

    def _check(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input dimension {self.in_dim}, got {x.shape[-1]}")

    def __call__(self, x):
        """Forward pass on one point ``(d,)`` or a batch ``(n, d)``.

        Scalar-output networks return a float / ``(n,)`` array; vector heads
        return ``(out,)`` / ``(n, out)``.
        """
        x = np.asarray(x, dtype=np.float64)
        self._check(x)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = dense_value(h, w, b, relu=k < 3)
        if self.head == "sigmoid":
            h = logistic(h)
        if self._scalar:
            h = h[:, 0]
            return float(h[0]) if single else h
        return h[0] if single else h

    def forward(self, x, params=None):
        """Taped forward pass.  ``x`` is a Tensor or array of shape ``(n, d)``;
        ``params`` (Tensors) default to constants built from this network.
        Returns ``(n, out)``.
        """
        if not isinstance(x, Tensor):
            x = Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if x.value.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input dimension {self.in_dim}, got {x.value.shape[-1]}")
        if params is None:
            params = [Tensor(p) for p in self.params()]
        h = x
        for k in range(4):
            h = dense(h, params[2 * k], params[2 * k + 1], relu=k < 3)
        if self.head == "sigmoid":
            h = h.sigmoid()
        return h

    def value_and_grad(self, x):
        """Values ``(n,)`` and input gradients ``(n, d)`` of a scalar network
        without building a tape.  Values match :meth:`forward` bitwise."""
        if not self._scalar:
            raise ShapeError("value_and_grad needs a scalar-output network")
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self._check(h)
        masks = []
        for k in range(3):
            h = dense_value(h, self.weights[k], self.biases[k], relu=True)
            masks.append(h > 0)
        out = dense_value(h, self.weights[3], self.biases[3], relu=False)[:, 0]
        if self.head == "sigmoid":
            out = logistic(out)
            scale = out * (1.0 - out)
        else:
            scale = np.ones_like(out)
        g = scale[:, None] * self.weights[3][:, 0]
        for k in (2, 1, 0):
            g = (g * masks[k]) @ self.weights[k].T
        return out, g


def mlp_forward(net, x):
    """Evaluate ``net`` at a single input and return a float (scalar heads)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("mlp_forward takes a single input vector")
    return net(x)


def input_gradient(net, x):
    """d net(x) / dx for a scalar-output network, batched over rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xt = Tensor(x, requires_grad=True)
    net.forward(xt).sum().backward()
    return xt.grad
