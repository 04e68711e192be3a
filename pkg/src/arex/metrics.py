"""Evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArexError, ShapeError


class NormalizationError(ArexError, ZeroDivisionError):
    pass


@dataclass
class MetricReport:
    name: str
    value: float
    population: int
    seed: int | None = None
    tag: str = "offline"
    flag: str = ""

    def __post_init__(self):
        if self.population <= 0:
            raise ValueError("population size must be positive")


def _same_length(*arrays):
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ShapeError("inputs must have equal lengths")


def mse(predictions, outcomes):
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64)
    _same_length(p, y)
    d = p - y
    return float(np.mean(d * d))


def nmse(predictions, outcomes, base_outcomes):
    """Mean-squared error divided by the mean base outcome."""
    _same_length(predictions, outcomes)
    nc = float(np.mean(np.asarray(base_outcomes, dtype=np.float64)))
    if nc == 0.0:
        raise NormalizationError("mean base outcome is zero")
    return mse(predictions, outcomes) / nc


def bce(probabilities, labels, weights=None, eps=1e-12):
    p = np.clip(np.asarray(probabilities, dtype=np.float64), eps, 1.0 - eps)
    y = np.asarray(labels, dtype=np.float64)
    _same_length(p, y)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    if weights is not None:
        w0, w1 = weights
        loss = loss * np.where(y == 1, w1, w0)
    return float(np.mean(loss))


def f1_binary(predictions, labels, return_flag=False):
    """F1 of the positive class.

    With no predicted and no actual positives the score is 0 and the flag
    is set to ``"no-positives"``.
    """
    p = np.asarray(predictions).astype(bool)
    y = np.asarray(labels).astype(bool)
    _same_length(p, y)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    flag = ""
    if tp == 0:
        score = 0.0
        if fp == 0 and fn == 0:
            flag = "no-positives"
    else:
        score = 2.0 * tp / (2.0 * tp + fp + fn)
    return (score, flag) if return_flag else score


def compliance_rate(responses, recommendations):
    """Fraction of agents whose response equals the recommendation exactly."""
    r = np.asarray(responses, dtype=np.float64)
    x = np.asarray(recommendations, dtype=np.float64)
    _same_length(r, x)
    if r.ndim == 1:
        r, x = r[:, None], x[:, None]
    return float(np.mean(np.all(r == x, axis=1)))


def utility_change_summary(delta, slack=1e-12):
    d = np.asarray(delta, dtype=np.float64)
    q = np.quantile(d, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "n": int(d.size),
        "harmed_fraction": float(np.mean(d < -slack)),
        "mean": float(np.mean(d)),
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
    }
