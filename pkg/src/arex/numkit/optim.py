"""First-order optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericDivergenceError, ShapeError


@dataclass
class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays.

    ``lr`` is one rate for every parameter or a sequence with one per array.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads):
        if len(params) != len(grads):
            raise ShapeError("params and grads have different lengths")
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericDivergenceError("non-finite gradient", iteration=self.step_count)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        rates = self.lr if isinstance(self.lr, (list, tuple)) else [self.lr] * len(params)
        if len(rates) != len(params):
            raise ShapeError("one learning rate per parameter array expected")
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / c1
            v_hat = self.v[k] / c2
            out.append(p - rates[k] * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def optimizer_step(state, params, grads):
    """Functional wrapper: returns ``(new_params, state)``."""
    return state.step(params, grads), state
