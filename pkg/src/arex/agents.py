"""Strategic agents: costs, true utility, and reactions to explanations.

Utility follows the additive form ``u(g, x) = b(g, x) - c(x_base, x)`` where
the benefit ``b`` is ``-g(x)`` when lower scores are better (insurance
pricing) and ``g(x)`` when higher scores are better (credit scoring).

Infinite costs never enter arithmetic: cost objects report feasibility
separately and :func:`true_utility` returns ``-inf`` only as a final value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DegeneratePosteriorError,
    IntegrityError,
    ShapeError,
    UninitializedSimulatorError,
)
from .numkit import logistic

INTEGRITY_TOL = 1e-9


# ---------------------------------------------------------------------------
# costs


class QuadraticCost:
    """``alpha * ||x - x_base||^2``; ``alpha`` may be a per-agent array."""

    kind = "quadratic"

    def __init__(self, alpha):
        self.alpha = np.abs(np.asarray(alpha, dtype=np.float64))
        if np.any(self.alpha <= 0):
            raise ValueError("quadratic cost needs alpha != 0")

    def __repr__(self):
        return f"QuadraticCost(alpha={self.alpha!r})"

    def evaluate(self, base, x):
        """Vectorized cost.  Returns ``(values, feasible)``."""
        diff = np.asarray(x, dtype=np.float64) - np.asarray(base, dtype=np.float64)
        values = self.alpha * np.sum(diff * diff, axis=-1)
        return values, np.ones(np.shape(values), dtype=bool)

    def select(self, idx):
        return QuadraticCost(self.alpha if self.alpha.ndim == 0 else self.alpha[idx])

    def params(self):
        return {"alpha": self.alpha}

    def __call__(self, base, x):
        values, _ = self.evaluate(base, x)
        return float(values)


class WeightedL1Cost:
    """``scale * sum_{i modifiable} |x_i - base_i| / (U_i - L_i)``.

    Touching a non-modifiable feature, or leaving ``[L, U]``, is infeasible.
    """

    kind = "weighted_l1"

    def __init__(self, scale, modifiable, lower, upper):
        self.scale = float(scale)
        self.modifiable = np.asarray(modifiable, dtype=bool)
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        span = self.upper - self.lower
        self._inv_span = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)

    def evaluate(self, base, x):
        base = np.asarray(base, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        diff = x - base
        moved_fixed = np.any((diff != 0) & ~self.modifiable, axis=-1)
        moved_flat = np.any((diff != 0) & (self._inv_span == 0), axis=-1)
        out_of_box = np.any((x < self.lower) | (x > self.upper), axis=-1)
        feasible = ~(moved_fixed | moved_flat | out_of_box)
        values = self.scale * np.sum(np.abs(diff) * self._inv_span * self.modifiable, axis=-1)
        return np.where(feasible, values, 0.0), feasible

    def select(self, idx):
        return self

    def params(self):
        return {"scale": self.scale}

    def __call__(self, base, x):
        values, feasible = self.evaluate(base, x)
        return float(values) if bool(feasible) else None


class PiecewiseCost:
    """One-dimensional cost of the movement ``dx = x - base``.

    ``breakpoints`` are increasing; piece ``k`` is a polynomial in ``dx``
    (ascending coefficients) used on ``[breakpoints[k-1], breakpoints[k]]``.
    """

    kind = "piecewise"

    def __init__(self, breakpoints, pieces):
        self.breakpoints = np.asarray(breakpoints, dtype=np.float64)
        self.pieces = [np.asarray(p, dtype=np.float64) for p in pieces]
        if len(self.pieces) != self.breakpoints.size + 1:
            raise ValueError("need one more piece than breakpoints")

    def evaluate(self, base, x):
        dx = (np.asarray(x, dtype=np.float64) - np.asarray(base, dtype=np.float64))[..., 0]
        which = np.searchsorted(self.breakpoints, dx, side="left")
        values = np.zeros_like(dx)
        for k, coef in enumerate(self.pieces):
            sel = which == k
            if np.any(sel):
                values = np.where(sel, np.polynomial.polynomial.polyval(dx, coef), values)
        return values, np.ones(np.shape(values), dtype=bool)

    def select(self, idx):
        return self

    def params(self):
        return {"breakpoints": self.breakpoints.tolist()}

    def __call__(self, base, x):
        values, _ = self.evaluate(base, x)
        return float(values)


def misled_agent_cost():
    """Cost of the misled-customer example: ``3 dx^2`` for ``dx <= -3``,
    ``9|dx|`` on ``[-3, 0]`` and ``9 dx`` for upward moves."""
    return PiecewiseCost([-3.0, 0.0], [[0.0, 0.0, 3.0], [0.0, -9.0], [0.0, 9.0]])


class TableCost:
    """Cost defined pointwise on a finite set of responses.

    Points not in the table cost ``default``; the base point costs 0.
    """

    kind = "table"

    def __init__(self, base, points, values, default):
        self.base = np.asarray(base, dtype=np.float64).reshape(-1)
        self.table = {
            tuple(np.asarray(p, dtype=np.float64).reshape(-1)): float(v)
            for p, v in zip(points, values)
        }
        self.default = float(default)

    def evaluate(self, base, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        base = np.broadcast_to(np.asarray(base, dtype=np.float64), x.shape)
        values = np.empty(x.shape[0])
        for i, (b, p) in enumerate(zip(base, x)):
            if np.array_equal(b, p):
                values[i] = 0.0
            else:
                values[i] = self.table.get(tuple(p), self.default)
        if single:
            values = values[0]
        return values, np.ones(np.shape(values), dtype=bool)

    def select(self, idx):
        return self

    def params(self):
        return {"entries": len(self.table)}

    def __call__(self, base, x):
        values, _ = self.evaluate(base, np.asarray(x, dtype=np.float64).reshape(-1))
        return float(values)


# ---------------------------------------------------------------------------
# agents


class Reaction(str, Enum):
    SURROGATE = "surrogate_best_responder"
    AREX = "arex_chooser"
    BAYESIAN = "bayesian_posterior_mean"


@dataclass
class AgentRecord:
    base: np.ndarray
    z: float = 0.0
    cost: object = None
    reaction: Reaction = Reaction.AREX

    def __post_init__(self):
        self.base = np.atleast_1d(np.asarray(self.base, dtype=np.float64))

    @property
    def dim(self):
        return self.base.size


@dataclass
class Population:
    """Column-wise agent population: ``base`` is ``(n, d)``."""

    base: np.ndarray
    z: np.ndarray
    cost: object
    reaction: Reaction = Reaction.AREX
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64)
        if self.base.ndim != 2:
            raise ShapeError("population base covariates must be (n, d)")
        self.z = np.asarray(self.z)

    def __len__(self):
        return self.base.shape[0]

    @property
    def dim(self):
        return self.base.shape[1]

    def agent(self, i):
        return AgentRecord(self.base[i].copy(), self.z[i].item(), self.cost.select(i), self.reaction)

    def subset(self, idx):
        idx = np.asarray(idx)
        cost = self.cost.select(idx)
        extra = {k: v[idx] for k, v in self.extra.items()}
        return Population(self.base[idx], self.z[idx], cost, self.reaction, extra)


@dataclass
class UtilityContext:
    model: object
    higher_is_better: bool = False

    def benefit(self, x):
        v = self.model(x)
        return v if self.higher_is_better else -v


def true_utility(ctx, agent, x):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != agent.dim:
        raise ShapeError(f"expected dimension {agent.dim}, got {x.size}")
    values, feasible = agent.cost.evaluate(agent.base, x)
    if not bool(feasible):
        return -math.inf
    return float(ctx.benefit(x)) - float(values)


def population_utility(ctx, pop, x):
    """Vectorized true utility; infeasible rows get ``-inf``."""
    values, feasible = pop.cost.evaluate(pop.base, x)
    benefit = ctx.benefit(x)
    return np.where(feasible, benefit - np.where(feasible, values, 0.0), -np.inf)


# ---------------------------------------------------------------------------
# reactions


@dataclass
class BestResponse:
    x: np.ndarray
    utility: float
    unbounded: bool = False


def _pick(points, utilities, base):
    """Max utility; ties go to the smallest move, then lexicographically smallest."""
    best = np.max(utilities)
    tied = np.flatnonzero(utilities == best)
    if tied.size > 1:
        moves = np.linalg.norm(points[tied] - base, axis=1)
        tied = tied[moves == moves.min()]
        if tied.size > 1:
            order = np.lexsort(points[tied].T[::-1])
            tied = tied[order[:1]]
    return int(tied[0])


def _surrogate_utility(agent, f, points, higher_is_better):
    fx = np.asarray(f(points), dtype=np.float64)
    benefit = fx if higher_is_better else -fx
    values, feasible = agent.cost.evaluate(agent.base, points)
    return np.where(feasible, benefit - np.where(feasible, values, 0.0), -np.inf)


def _golden_max(fn, lo, hi, iters=80):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return (c, fc) if fc >= fd else (d, fd)


def surrogate_best_response(
    agent,
    f,
    box,
    *,
    higher_is_better=False,
    grid=4001,
    candidates=None,
    restarts=8,
    seed=0,
    unbounded_margin=1e6,
):
    """Maximize the surrogate utility ``b(f, x) - c(x_base, x)`` over ``box``.

    ``box`` is ``(lower, upper)`` (scalars or per-dimension arrays).  If
    ``candidates`` is given the search is restricted to those points plus
    the base covariate and ``box`` is ignored.  One-dimensional boxes use a dense grid refined by
    golden-section search; higher dimensions use projected gradient ascent
    from the base point and ``restarts`` random starts.
    """
    base = agent.base
    d = base.size

    def util(points):
        return _surrogate_utility(agent, f, np.atleast_2d(points), higher_is_better)

    if candidates is not None:
        pts = np.vstack([np.asarray(candidates, dtype=np.float64).reshape(-1, d), base])
        u = util(pts)
        k = _pick(pts, u, base)
        return BestResponse(pts[k].copy(), float(u[k]))

    lower = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (d,))
    upper = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (d,))
    base_u = float(util(base)[0])

    if d == 1:
        pts = np.concatenate([np.linspace(lower[0], upper[0], grid), base]).reshape(-1, 1)
        u = util(pts)
        k = _pick(pts, u, base)
        x_best, u_best = pts[k].copy(), float(u[k])
        spacing = (upper[0] - lower[0]) / max(grid - 1, 1)
        lo = max(lower[0], x_best[0] - spacing)
        hi = min(upper[0], x_best[0] + spacing)
        if hi > lo:
            xr, ur = _golden_max(lambda t: float(util(np.array([t]))[0]), lo, hi)
            if ur > u_best:
                x_best, u_best = np.array([xr]), ur
    else:
        x_best, u_best = _projected_ascent(util, base, lower, upper, restarts, seed)

    at_edge = bool(np.any(np.isclose(x_best, lower) | np.isclose(x_best, upper)))
    unbounded = at_edge and (u_best - base_u) > unbounded_margin
    return BestResponse(x_best, u_best, unbounded)


def _projected_ascent(util, base, lower, upper, restarts, seed, iters=300, h=1e-6):
    rng = np.random.default_rng(seed)
    d = base.size
    starts = [base.copy()] + [rng.uniform(lower, upper) for _ in range(restarts)]
    best_pts, best_u = [base.copy()], [float(util(base)[0])]
    eye = np.eye(d) * h
    for x in starts:
        ux = float(util(x)[0])
        step = 0.1 * float(np.max(upper - lower))
        for _ in range(iters):
            probes = np.vstack([x + eye, x - eye])
            up = util(np.clip(probes, lower, upper))
            g = (up[:d] - up[d:]) / (2 * h)
            if not np.all(np.isfinite(g)):
                g = np.nan_to_num(g, nan=0.0, posinf=0.0, neginf=0.0)
            norm = np.linalg.norm(g)
            if norm == 0 or step < 1e-10:
                break
            cand = np.clip(x + step * g / norm, lower, upper)
            uc = float(util(cand)[0])
            if uc > ux:
                x, ux = cand, uc
                step *= 1.2
            else:
                step *= 0.5
        best_pts.append(x)
        best_u.append(ux)
    pts = np.array(best_pts)
    k = _pick(pts, np.array(best_u), base)
    return pts[k].copy(), best_u[k]


def check_disclosure(ctx, rec_x, rec_y, tol=INTEGRITY_TOL):
    actual = ctx.model(np.asarray(rec_x, dtype=np.float64))
    gap = np.max(np.abs(np.asarray(actual) - np.asarray(rec_y)))
    if not gap <= tol:
        raise IntegrityError(f"disclosed prediction differs from g(x_rec) by {gap:.3g}")


def arex_response(agent, ctx, rec):
    """Adopt the recommendation iff it does not lower the agent's true utility.

    ``rec`` is ``(x_rec, y_rec)`` or an object with ``x``/``y`` attributes.
    Returns the recommendation or the base covariate itself.
    """
    x_rec, y_rec = (rec.x, rec.y) if hasattr(rec, "x") else rec
    x_rec = np.atleast_1d(np.asarray(x_rec, dtype=np.float64))
    check_disclosure(ctx, x_rec, y_rec)
    if true_utility(ctx, agent, x_rec) >= true_utility(ctx, agent, agent.base):
        return x_rec
    return agent.base


def arex_response_batch(pop, ctx, x_rec, y_rec=None):
    """Vectorized adoption rule.  Returns ``(responses, adopted)``."""
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if y_rec is not None:
        check_disclosure(ctx, x_rec, y_rec)
    adopted = population_utility(ctx, pop, x_rec) >= population_utility(ctx, pop, pop.base)
    return np.where(adopted[:, None], x_rec, pop.base), adopted


class PosteriorMeanSurrogate:
    """``f(x) = sum_i p(theta_i | e) g_theta_i(x)``."""

    def __init__(self, weights, models):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.models = list(models)

    def __call__(self, x):
        out = 0.0
        for w, m in zip(self.weights, self.models):
            if w != 0.0:
                out = out + w * m(x)
        return out


def posterior_mean_surrogate(prior, likelihood, e, family):
    """Bayesian agent's belief about the model after seeing explanation ``e``.

    ``prior`` is a sequence of ``(theta, p)``; ``likelihood(e, theta)``
    returns a nonnegative weight; ``family(theta)`` builds ``g_theta``.
    """
    thetas = [t for t, _ in prior]
    p = np.array([w for _, w in prior], dtype=np.float64)
    if not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("prior probabilities must sum to 1")
    post = np.array([likelihood(e, t) for t in thetas], dtype=np.float64) * p
    total = post.sum()
    if not total > 0:
        raise DegeneratePosteriorError("every hypothesis has zero posterior mass")
    return PosteriorMeanSurrogate(post / total, [family(t) for t in thetas])


# ---------------------------------------------------------------------------
# outcomes


class QuadraticOutcome:
    """Deterministic outcome ``h(x, z)``: a quadratic in the stacked ``(x, z)``."""

    def __init__(self, A, b, c=0.0):
        self.A = np.asarray(A, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.c = float(c)

    def __call__(self, x, z):
        x = np.asarray(x, dtype=np.float64)
        v = np.concatenate([np.atleast_2d(x), np.reshape(z, (-1, 1)).astype(np.float64)], axis=1)
        out = np.einsum("ni,ij,nj->n", v, self.A, v) + v @ self.b + self.c
        return float(out[0]) if x.ndim == 1 else out


class LogisticOutcome:
    """Binary outcome with success probability ``logistic(w.x + b)``."""

    def __init__(self, weights=None, bias=0.0, degenerate=False):
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.degenerate = degenerate

    @property
    def fitted(self):
        return self.weights is not None

    def probability(self, x):
        if not self.fitted:
            raise UninitializedSimulatorError("outcome simulator has not been fitted")
        x = np.asarray(x, dtype=np.float64)
        return logistic(x @ self.weights + self.bias)

    def draw(self, x, uniforms):
        """Bernoulli draws using caller-supplied uniforms (common random numbers)."""
        return (np.asarray(uniforms) < self.probability(x)).astype(np.int64)

    def __call__(self, x, z=None, rng=None):
        p = self.probability(x)
        rng = np.random.default_rng(rng)
        u = rng.random(np.shape(p))
        out = (u < p).astype(np.int64)
        return int(out) if np.ndim(out) == 0 else out


def evaluate_outcome(h, x, z=None, seed=None):
    """Realized outcome at covariate ``x``; classification outcomes are seeded draws."""
    if isinstance(h, LogisticOutcome):
        return h(x, rng=seed)
    return h(x, z)
