"""Explanation policies: surrogates, counterfactuals, action recommendations.

An explanation is one of three payloads:

* :class:`Surrogate` -- a function the agent treats as a stand-in for ``g``;
* :class:`ARex` -- a recommended covariate and the model's prediction there;
* :class:`Attribution` -- per-feature scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDomainError, NumericDivergenceError, ParseError, ShapeError
from .models import value_and_input_gradient

# ---------------------------------------------------------------------------
# explanation payloads


class TaylorSurrogate:
    """Local expansion ``g(c) + grad.(x - c) [+ 1/2 (x - c)^T H (x - c)]``."""

    def __init__(self, center, value, gradient, hessian=None):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        self.value = float(value)
        self.gradient = np.atleast_1d(np.asarray(gradient, dtype=np.float64))
        self.hessian = None if hessian is None else np.atleast_2d(np.asarray(hessian, dtype=np.float64))
        self.dim = self.center.size

    @property
    def order(self):
        return 1 if self.hessian is None else 2

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"expected dimension {self.dim}, got {x.shape[-1]}")
        dx = x - self.center
        out = self.value + dx @ self.gradient
        if self.hessian is not None:
            out = out + 0.5 * np.einsum("...i,ij,...j->...", dx, self.hessian, dx)
        return float(out) if x.ndim == 1 else out

    def polynomial(self):
        """Ascending coefficients in ``x`` (one-dimensional surrogates only)."""
        if self.dim != 1:
            raise ShapeError("polynomial form exists only in one dimension")
        c, v, g = self.center[0], self.value, self.gradient[0]
        h = 0.0 if self.hessian is None else self.hessian[0, 0]
        return np.array([v - g * c + 0.5 * h * c * c, g - h * c, 0.5 * h])

    def payload(self):
        hess = [] if self.hessian is None else self.hessian.reshape(-1).tolist()
        return {
            "center": self.center.tolist(),
            "value": self.value,
            "gradient": self.gradient.tolist(),
            "hessian": hess,
        }


@dataclass
class Surrogate:
    fn: object

    def __call__(self, x):
        return self.fn(x)


@dataclass
class ARex:
    x: np.ndarray
    y: float

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))


@dataclass
class Attribution:
    scores: np.ndarray


def _fmt(values):
    return ",".join(repr(float(v)) for v in np.ravel(values))


def _parse(text):
    return np.array([float(t) for t in text.split(",") if t], dtype=np.float64)


def dumps_explanation(e):
    """One tab-separated record: variant tag, then its payload."""
    if isinstance(e, ARex):
        return f"arex\t{_fmt(e.x)}\t{e.y!r}"
    if isinstance(e, Attribution):
        return f"attribution\t{_fmt(e.scores)}"
    if isinstance(e, Surrogate) and isinstance(e.fn, TaylorSurrogate):
        p = e.fn.payload()
        return "taylor\t" + "\t".join(
            [_fmt(p["center"]), repr(p["value"]), _fmt(p["gradient"]), _fmt(p["hessian"])]
        )
    if isinstance(e, Surrogate) and hasattr(e.fn, "coefficients"):
        return f"polynomial\t{_fmt(e.fn.coefficients)}"
    raise TypeError(f"cannot serialize {type(e).__name__}")


def loads_explanation(line):
    from .models import Polynomial

    parts = line.rstrip("\n").split("\t")
    tag = parts[0]
    try:
        if tag == "arex":
            return ARex(_parse(parts[1]), float(parts[2]))
        if tag == "attribution":
            return Attribution(_parse(parts[1]))
        if tag == "polynomial":
            return Surrogate(Polynomial(_parse(parts[1])))
        if tag == "taylor":
            center = _parse(parts[1])
            hess = _parse(parts[4]) if len(parts) > 4 else np.array([])
            d = center.size
            return Surrogate(
                TaylorSurrogate(
                    center,
                    float(parts[2]),
                    _parse(parts[3]),
                    hess.reshape(d, d) if hess.size else None,
                )
            )
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed {tag!r} record: {exc}") from None
    raise ParseError(f"unknown explanation tag {tag!r}")


# ---------------------------------------------------------------------------
# surrogates


def taylor_surrogate(g, base, order=2):
    """Taylor expansion of ``g`` around the agent's base covariate."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    hess = g.hessian(base) if order == 2 else None
    if hess is not None and not np.all(np.isfinite(hess)):
        raise NumericDivergenceError("non-finite Hessian")
    return Surrogate(TaylorSurrogate(base, g(base), g.gradient(base), hess))


# ---------------------------------------------------------------------------
# counterfactuals


@dataclass
class Constraints:
    """Feasible region for recommendations.

    Non-modifiable features are pinned to the base value; everything is
    clipped to ``[lower, upper]``; ``categorical`` features are snapped to
    the nearest entry of ``levels[i]`` once optimization is over.
    """

    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    modifiable: np.ndarray | None = None
    categorical: tuple = ()
    levels: dict = field(default_factory=dict)

    def project(self, base, x):
        x = np.array(x, dtype=np.float64, copy=True)
        if self.lower is not None or self.upper is not None:
            x = np.clip(x, self.lower, self.upper)
        if self.modifiable is not None:
            x = np.where(self.modifiable, x, base)
        return x

    def finalize(self, base, x):
        x = self.project(base, x)
        for i in self.categorical:
            levels = np.asarray(self.levels.get(i, []), dtype=np.float64)
            if levels.size == 0:
                x[..., i] = np.round(x[..., i])
                continue
            idx = np.abs(x[..., i][..., None] - levels).argmin(axis=-1)
            x[..., i] = levels[idx]
        if self.modifiable is not None:
            x = np.where(self.modifiable, x, base)
        return x


def counterfactual_batch(
    g,
    bases,
    lam,
    constraints=None,
    *,
    higher_is_better=False,
    steps=500,
    lr=0.05,
    tol=0.0,
):
    """Counterfactual recommendations for every row of ``bases``.

    Minimizes ``s * g(x) + lam * ||x - base||^2`` (``s = -1`` when higher
    scores are better) by projected gradient descent with a per-row step
    size that doubles on accepted steps (up to ``1 / (2 lam)``) and halves on
    rejected ones.  A row stops when its proposals no longer move it or, with
    ``tol > 0``, once five steps improve its objective by less than ``tol``
    relative.  Only improving steps are taken, so the returned
    point is the best iterate seen.  Returns ``(X, g(X))``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    constraints = constraints or Constraints()
    bases = np.atleast_2d(np.asarray(bases, dtype=np.float64))
    sign = -1.0 if higher_is_better else 1.0

    def objective(x, b, gx):
        diff = x - b
        return sign * gx + lam * np.sum(diff * diff, axis=1)

    x = constraints.project(bases, bases)
    gx, dgx = value_and_input_gradient(g, x)
    obj = objective(x, bases, gx)
    if not np.all(np.isfinite(obj)):
        raise NumericDivergenceError("non-finite objective at the start", iteration=0, dump=x)
    # 1 / (2 lam) solves the problem exactly wherever g is locally linear
    cap = max(float(lr), 0.5 / lam)
    step = np.full(bases.shape[0], float(lr))
    active = np.ones(bases.shape[0], dtype=bool)
    checkpoint = obj.copy()
    for it in range(steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        b = bases[idx]
        grad = sign * dgx[idx] + 2.0 * lam * (x[idx] - b)
        cand = constraints.project(b, x[idx] - step[idx, None] * grad)
        cand_g, cand_dg = value_and_input_gradient(g, cand)
        cand_obj = objective(cand, b, cand_g)
        if not np.all(np.isfinite(cand_obj)):
            raise NumericDivergenceError("non-finite objective", iteration=it + 1, dump=cand)
        cand_grad = sign * cand_dg + 2.0 * lam * (cand - b)
        # objective ties (float resolution) are broken by the smaller gradient
        flatter = np.sum(cand_grad * cand_grad, axis=1) < np.sum(grad * grad, axis=1)
        better = (cand_obj < obj[idx]) | ((cand_obj == obj[idx]) & flatter)
        moved = np.max(np.abs(cand - x[idx]), axis=1)
        take = idx[better]
        x[take] = cand[better]
        obj[take] = cand_obj[better]
        dgx[take] = cand_dg[better]
        step[idx] = np.where(better, np.minimum(step[idx] * 2.0, cap), step[idx] * 0.5)
        scale = 1.0 + np.max(np.abs(x[idx]), axis=1)
        active[idx] = (moved > 1e-13 * scale) & (step[idx] > 1e-14)
        if tol > 0 and (it + 1) % 5 == 0:
            stalled = checkpoint[idx] - obj[idx] <= tol * (1.0 + np.abs(obj[idx]))
            active[idx] &= ~stalled
            checkpoint[idx] = obj[idx]
    x = constraints.finalize(bases, x)
    return x, np.asarray(g(x), dtype=np.float64)


def counterfactual_explain(g, base, lam, constraints=None, **kwargs):
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    X, Y = counterfactual_batch(g, base[None, :], lam, constraints, **kwargs)
    return ARex(X[0], float(Y[0]))


# ---------------------------------------------------------------------------
# action-recommendation policies


def arex_policy_recommend(sigma, g, base, constraints=None):
    """Recommendation ``sigma(base)`` (projected if constrained) and ``g`` there."""
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    x = np.asarray(sigma(base), dtype=np.float64)
    if x.ndim == 0 and base.size == 1:
        x = x.reshape(1)
    if x.shape != base.shape:
        raise ShapeError("recommendation function must output the covariate dimension")
    if constraints is not None:
        x = constraints.finalize(base, x)
    return ARex(x, g(x))


@dataclass
class GaussianSampler:
    """Random recommendations ``N(center, variance * I)``.

    ``centers`` holds one or more rules mapping base covariates ``(n, d)``
    to centers; with several, each agent's rule is chosen uniformly.
    """

    centers: list
    variance: float
    constraints: Constraints | None = None

    def sample(self, bases, rng):
        bases = np.atleast_2d(np.asarray(bases, dtype=np.float64))
        n, d = bases.shape
        options = np.stack([np.broadcast_to(c(bases), (n, d)) for c in self.centers])
        pick = rng.integers(len(self.centers), size=n) if len(self.centers) > 1 else np.zeros(n, int)
        center = options[pick, np.arange(n)]
        x = center + np.sqrt(self.variance) * rng.standard_normal((n, d))
        if self.constraints is not None:
            x = self.constraints.finalize(bases, x)
        return x


def base_center(bases):
    return bases


def fixed_center(value):
    return lambda bases: np.full_like(bases, value)


def random_arex_sample(sampler, g, base, seed):
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    x = sampler.sample(base[None, :], np.random.default_rng(seed))[0]
    return ARex(x, g(x))


# ---------------------------------------------------------------------------
# policy specs used by audits and experiments


@dataclass
class TaylorPolicy:
    order: int = 2
    kind = "surrogate"

    def explain(self, g, base, seed=None):
        return taylor_surrogate(g, base, self.order)


@dataclass
class CounterfactualPolicy:
    lam: float
    constraints: Constraints | None = None
    higher_is_better: bool = False
    steps: int = 500
    lr: float = 0.05
    tol: float = 0.0
    kind = "arex"

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def explain_batch(self, g, bases, rng=None):
        return counterfactual_batch(
            g, bases, self.lam, self.constraints,
            higher_is_better=self.higher_is_better, steps=self.steps, lr=self.lr, tol=self.tol,
        )

    def explain(self, g, base, seed=None):
        X, Y = self.explain_batch(g, np.atleast_2d(base))
        return ARex(X[0], float(Y[0]))


@dataclass
class LearnedArexPolicy:
    sigma: object
    constraints: Constraints | None = None
    kind = "arex"

    def explain_batch(self, g, bases, rng=None):
        bases = np.atleast_2d(np.asarray(bases, dtype=np.float64))
        x = np.asarray(self.sigma(bases), dtype=np.float64)
        if x.ndim == 1 and bases.shape[1] == 1:
            x = x[:, None]
        if x.shape != bases.shape:
            raise ShapeError("recommendation function must output the covariate dimension")
        if self.constraints is not None:
            x = self.constraints.finalize(bases, x)
        return x, np.asarray(g(x), dtype=np.float64)

    def explain(self, g, base, seed=None):
        return arex_policy_recommend(self.sigma, g, base, self.constraints)


@dataclass
class RandomArexPolicy:
    sampler: GaussianSampler
    kind = "arex"

    def explain_batch(self, g, bases, rng):
        x = self.sampler.sample(bases, rng)
        return x, np.asarray(g(x), dtype=np.float64)

    def explain(self, g, base, seed=None):
        return random_arex_sample(self.sampler, g, base, seed)


# ---------------------------------------------------------------------------
# Shapley counterexample


def uniform_second_moment(a, b):
    if not a < b:
        raise InvalidDomainError(f"need a < b, got [{a}, {b}]")
    return (b**3 - a**3) / (3.0 * (b - a))


def shapley_two_feature(base, x2_range, x1_mean=0.0):
    """Shapley value of feature 2 for ``g(x) = x1 - x2^2`` with independent
    features and ``X2 ~ U([a, b])``.

    Uses the two-player formula
    ``1/2 (g(x) - E g(x1, X2) + E g(X1, x2) - E g(X1, X2))`` with the
    expectations in closed form; ``x1_mean`` cancels but is kept explicit.
    """
    x1, x2 = (float(v) for v in np.asarray(base, dtype=np.float64).reshape(2))
    m2 = uniform_second_moment(*x2_range)
    g_base = x1 - x2 * x2
    e_drop2 = x1 - m2
    e_drop1 = x1_mean - x2 * x2
    e_none = x1_mean - m2
    return 0.5 * (g_base - e_drop2 + e_drop1 - e_none)
