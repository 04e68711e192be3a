"""Simulated populations the decision maker interacts with during training."""

from __future__ import annotations

import zlib

import numpy as np

from ..agents import Population, Reaction, WeightedL1Cost
from ..dataio.synthetic import gen_synthetic_population, synthetic_outcome
from ..explain import Constraints


def derive_seed(seed, tag, index=0):
    """Independent integer seed for the stream named ``tag``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), int(index)])
    return int(ss.generate_state(1)[0])


class SyntheticEnvironment:
    """Three-feature agents with quadratic costs and a quadratic outcome.

    The outcome is ``outcome`` if given, else drawn from ``outcome_seed``.
    ``cost_multiplier`` rescales every agent's cost; ``np.inf`` gives a
    population that never moves.
    """

    loss = "squared"
    higher_is_better = False
    constraints = None

    def __init__(self, outcome_seed=0, outcome_scale=0.1, cost_multiplier=1.0, outcome=None):
        self.outcome = outcome if outcome is not None else synthetic_outcome(outcome_seed, scale=outcome_scale)
        self.cost_multiplier = float(cost_multiplier)
        self.dim = 3

    def population(self, n, seed, split="train"):
        pop, _ = gen_synthetic_population(n, seed, outcome=self.outcome)
        if self.cost_multiplier != 1.0:
            pop.cost = _ScaledCost(pop.cost, self.cost_multiplier)
        return pop

    def outcomes(self, pop, x):
        return np.asarray(self.outcome(x, pop.z), dtype=np.float64)

    def base_outcomes(self, pop):
        return pop.extra["y_base"]


class _ScaledCost:
    """A cost multiplied by a constant; an infinite multiplier forbids moving."""

    kind = "scaled"

    def __init__(self, inner, factor):
        self.inner = inner
        self.factor = factor

    def evaluate(self, base, x):
        values, feasible = self.inner.evaluate(base, x)
        moved = np.any(np.asarray(x) != np.asarray(base), axis=-1)
        if np.isinf(self.factor):
            return np.where(moved, 0.0, values), feasible & ~moved
        return values * self.factor, feasible

    def select(self, idx):
        return _ScaledCost(self.inner.select(idx), self.factor)

    def params(self):
        return {"factor": self.factor, **self.inner.params()}


class CreditEnvironment:
    """Agents drawn from a tabular pool, scored by a probability ``g_s``.

    Each agent carries a private uniform ``z``; its outcome at ``x`` is
    ``1[z < s(x)]`` for the fitted outcome simulator ``s``, so the same
    agent gets the same draw whichever covariate it ends up with.
    """

    loss = "bce"
    higher_is_better = True

    def __init__(self, train_pool, test_pool, simulator, cost_scale=0.01):
        self.train_pool = train_pool
        self.test_pool = test_pool
        self.simulator = simulator
        self.dim = train_pool.n_features
        self.cost = WeightedL1Cost(cost_scale, train_pool.modifiable, train_pool.lower, train_pool.upper)
        self.constraints = Constraints(
            lower=train_pool.lower,
            upper=train_pool.upper,
            modifiable=train_pool.modifiable,
            categorical=train_pool.categorical,
            levels=train_pool.levels,
        )

    def population(self, n, seed, split="train"):
        rng = np.random.default_rng(seed)
        if split == "test":
            pool = self.test_pool
            idx = np.arange(len(pool)) if n >= len(pool) else rng.choice(len(pool), n, replace=False)
        else:
            pool = self.train_pool
            idx = rng.integers(0, len(pool), size=n)
        base = pool.X[idx]
        z = rng.random(len(idx))
        pop = Population(base, z, self.cost, Reaction.AREX)
        pop.extra["y_base"] = self.outcomes(pop, base)
        return pop

    def outcomes(self, pop, x):
        return self.simulator.draw(x, pop.z).astype(np.float64)

    def base_outcomes(self, pop):
        return pop.extra["y_base"]

