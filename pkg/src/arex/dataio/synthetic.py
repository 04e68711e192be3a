"""Synthetic agent populations.

Two generators: the scalar population used to audit Taylor-expansion
explanations against random recommendations, and the three-feature
insurance-style population with an unobserved group ``z`` that drives both
costs and outcomes.
"""

from __future__ import annotations

import numpy as np

from ..agents import Population, QuadraticCost, QuadraticOutcome, Reaction


def gen_noharm_population(n, seed, reaction=Reaction.SURROGATE):
    """``x ~ N(0, 0.4^2)``, ``alpha ~ U([1, 1.2])``, cost ``alpha |x - x_base|^2``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    base = rng.normal(0.0, 0.4, size=(n, 1))
    alpha = rng.uniform(1.0, 1.2, size=n)
    return Population(base, np.zeros(n, dtype=np.int64), QuadraticCost(alpha), reaction)


def synthetic_outcome(seed, dim=3, scale=0.1):
    """Quadratic outcome over ``(x, z)`` with seeded coefficients.

    The quadratic form is ``scale * M^T M`` (positive semidefinite) so the
    outcome behaves like a cost that stays positive around the population;
    linear and constant terms are ``scale * N(0, 1)``.
    """
    rng = np.random.default_rng(seed)
    k = dim + 1
    M = rng.standard_normal((k, k))
    A = scale * (M.T @ M)
    b = scale * rng.standard_normal(k)
    c = scale * rng.standard_normal()
    return QuadraticOutcome(A, b, c)


def gen_synthetic_population(n, seed, outcome=None, outcome_seed=None):
    """Agents with ``z ~ U{0..3}``, ``alpha | z ~ N(0.02 + 0.1 z, 0.01^2)`` and
    ``x | z ~ N((10 + z) 1, 2 I)`` in three dimensions.

    Returns ``(population, outcome)``.  The outcome function is ``outcome``
    if given, else built from ``outcome_seed`` (default ``seed``); base
    outcomes are stored in ``population.extra["y_base"]``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 4, size=n)
    alpha = rng.normal(0.02 + 0.1 * z, 0.01)
    base = rng.normal(0.0, np.sqrt(2.0), size=(n, 3)) + (10.0 + z)[:, None]
    if outcome is None:
        outcome = synthetic_outcome(seed if outcome_seed is None else outcome_seed)
    pop = Population(base, z, QuadraticCost(alpha), Reaction.AREX)
    pop.extra["y_base"] = outcome(base, z)
    return pop, outcome
