"""Compliance data, the compliance predictor and simulated agent responses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..agents import UtilityContext, arex_response_batch
from ..errors import NumericDivergenceError
from ..numkit import Tensor, concat
from .nets import ConstantClassifier, ScaledNet, bce_loss, minimize


@dataclass(frozen=True)
class ComplianceSample:
    base: np.ndarray
    rec: np.ndarray
    gain: float
    adopted: int


@dataclass
class ComplianceSet:
    """Column storage for compliance samples; indexing yields ComplianceSample."""

    base: np.ndarray
    rec: np.ndarray
    gain: np.ndarray
    adopted: np.ndarray

    def __len__(self):
        return self.base.shape[0]

    def __getitem__(self, i):
        return ComplianceSample(self.base[i], self.rec[i], float(self.gain[i]), int(self.adopted[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def features(self):
        return compliance_features(self.base, self.rec, self.gain)

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(
            np.array([s.base for s in samples], dtype=np.float64),
            np.array([s.rec for s in samples], dtype=np.float64),
            np.array([s.gain for s in samples], dtype=np.float64),
            np.array([s.adopted for s in samples], dtype=np.int64),
        )


def compliance_features(base, rec, gain):
    return np.column_stack([base, rec, np.reshape(gain, (-1, 1))])


def collect_compliance(population, g, sampler, rng, higher_is_better=False):
    """Show each agent one sampled recommendation and record whether it adopts.

    The gain feature is ``g(base) - g(rec)`` in every setting.
    """
    bases = population.base
    rec = sampler.sample(bases, rng)
    y_rec = np.asarray(g(rec), dtype=np.float64)
    ctx = UtilityContext(g, higher_is_better)
    _, adopted = arex_response_batch(population, ctx, rec, y_rec)
    gain = np.asarray(g(bases), dtype=np.float64) - y_rec
    return ComplianceSet(bases.copy(), rec, gain, adopted.astype(np.int64))


class CompliancePredictor:
    """``xi(base, rec, gain) -> probability of adoption``."""

    def __init__(self, model, degenerate=False):
        self.model = model
        self.degenerate = degenerate

    def __call__(self, base, rec, gain):
        return np.asarray(self.model(compliance_features(base, rec, gain)), dtype=np.float64)

    def forward(self, base, rec, gain):
        """Taped ``(n, 1)`` probabilities; inputs are Tensors."""
        return self.model.forward(concat([base, rec, gain], axis=-1))


def inverse_frequency_weights(labels):
    labels = np.asarray(labels)
    n = labels.size
    n1 = int(np.sum(labels == 1))
    n0 = n - n1
    return (n / (2.0 * n0), n / (2.0 * n1))


def train_compliance(samples, class_weights=None, *, steps=2000, lr=3e-3, batch_size=512, hidden=32, seed=0):
    """Weighted-BCE classifier on compliance samples.

    Weights default to inverse class frequency.  With a single label class
    a constant classifier is returned and flagged degenerate.
    Returns ``(predictor, losses)``.
    """
    if not isinstance(samples, ComplianceSet):
        samples = ComplianceSet.from_samples(samples)
    labels = samples.adopted.astype(np.float64)
    if len(labels) == 0:
        raise ValueError("no compliance samples")
    if np.all(labels == labels[0]):
        warnings.warn("compliance labels are all identical; using a constant classifier", stacklevel=2)
        return CompliancePredictor(ConstantClassifier(labels[0]), degenerate=True), []
    weights = inverse_frequency_weights(labels) if class_weights is None else tuple(class_weights)
    X = samples.features()
    net = ScaledNet.create(X, out_dim=1, hidden=hidden, head="sigmoid", seed=seed)
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    Y = labels[:, None]

    def loss_fn(leaves, step):
        if batch_size is None or batch_size >= n:
            xb, yb = X, Y
        else:
            idx = rng.integers(0, n, size=batch_size)
            xb, yb = X[idx], Y[idx]
        return bce_loss(net.forward(Tensor(xb), leaves), yb, weights)

    try:
        params, losses = minimize(loss_fn, net.params(), steps, lr)
    except NumericDivergenceError as exc:
        raise NumericDivergenceError(f"compliance training diverged: {exc}", iteration=exc.iteration) from None
    return CompliancePredictor(net.with_params(params)), losses


@dataclass
class SimulatedResponse:
    soft: np.ndarray
    hard: np.ndarray
    weight: np.ndarray


def simulate_response(xi, g, base, rec):
    """Predicted responses: the blend ``w rec + (1 - w) base`` and its 0.5 threshold."""
    base = np.atleast_2d(np.asarray(base, dtype=np.float64))
    rec = np.atleast_2d(np.asarray(rec, dtype=np.float64))
    gain = np.asarray(g(base), dtype=np.float64) - np.asarray(g(rec), dtype=np.float64)
    w = np.clip(xi(base, rec, gain), 0.0, 1.0)
    return SimulatedResponse(blend(w, rec, base), np.where((w >= 0.5)[:, None], rec, base), w)


def blend(w, rec, base):
    w = np.asarray(w, dtype=np.float64)[:, None]
    return w * rec + (1.0 - w) * base
