"""Executable checks for when explanations can or cannot harm agents.

All checkers work in the lower-is-better convention: an agent gains when the
score drops.  For higher-is-better settings pass ``-g`` and ``-f``.

Quantifiers over the whole covariate space are replaced by a finite probe
domain; every report records which domain was used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .agents import (
    Reaction,
    TableCost,
    arex_response,
    arex_response_batch,
    population_utility,
    surrogate_best_response,
    true_utility,
)
from .errors import (
    ConfigError,
    ConstructionFailedError,
    InvalidDomainError,
    NotInNonHarmfulSetError,
)
from .explain import ARex

HARM_SLACK = 1e-12


# ---------------------------------------------------------------------------
# probe domains


@dataclass
class ProbeDomain:
    points: np.ndarray
    description: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        self.points = pts.reshape(-1, 1) if pts.ndim == 1 else pts

    def __len__(self):
        return self.points.shape[0]


def grid_domain(lower, upper, n=2001):
    return ProbeDomain(np.linspace(lower, upper, n), f"grid[{lower!r},{upper!r}]x{n}")


def sobol_domain(lower, upper, n=4096, seed=0):
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    sampler = qmc.Sobol(d=lower.size, scramble=True, seed=seed)
    pts = qmc.scale(sampler.random(n), lower, upper)
    return ProbeDomain(pts, f"sobol(d={lower.size},n={n},seed={seed})")


def points_domain(points):
    pts = np.asarray(points, dtype=np.float64)
    return ProbeDomain(pts, f"points(n={len(pts)})")


def _as_domain(domain):
    if isinstance(domain, ProbeDomain):
        dom = domain
    else:
        dom = points_domain(domain)
    if len(dom) == 0:
        raise InvalidDomainError("probe domain is empty")
    return dom


# ---------------------------------------------------------------------------
# condition checks


@dataclass
class ConditionReport:
    condition: str
    verdict: str
    witness: tuple | None
    domain: str
    probes: int
    tolerance: float

    @property
    def holds(self):
        return self.verdict == "holds-on-domain"

    def to_text(self):
        lines = [
            f"condition\t{self.condition}",
            f"verdict\t{self.verdict}",
            f"domain\t{self.domain}",
            f"probes\t{self.probes}",
            f"tolerance\t{self.tolerance!r}",
        ]
        if self.witness is not None:
            x, lhs, rhs = self.witness
            lines.append("witness_x\t" + ",".join(repr(float(v)) for v in x))
            lines.append(f"witness_lhs\t{lhs!r}")
            lines.append(f"witness_rhs\t{rhs!r}")
        return "\n".join(lines) + "\n"


def _gap_check(name, g, f, base, domain, tolerance, restrict_lower):
    dom = _as_domain(domain)
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    pts = dom.points
    g_base, f_base = g(base), f(base)
    rhs = g_base - np.asarray(g(pts), dtype=np.float64)
    lhs = f_base - np.asarray(f(pts), dtype=np.float64)
    active = rhs > 0 if restrict_lower else np.ones(len(pts), dtype=bool)
    excess = np.where(active, lhs - rhs, -np.inf)
    violated = excess > tolerance
    if not np.any(violated):
        return ConditionReport(name, "holds-on-domain", None, dom.description, len(pts), tolerance)
    k = int(np.argmax(excess))  # first index among ties
    witness = (pts[k].copy(), float(lhs[k]), float(rhs[k]))
    return ConditionReport(name, "violated", witness, dom.description, len(pts), tolerance)


def check_necessary(g, f, base, domain, tolerance=1e-9):
    """``f(base) - f(x) <= g(base) - g(x)`` on probes with ``g(x) < g(base)``.

    The witness is the probe with the largest violation.
    """
    return _gap_check("necessary", g, f, base, domain, tolerance, restrict_lower=True)


def check_sufficient(g, f, base, domain, tolerance=1e-9):
    """The same inequality, required at every probe."""
    return _gap_check("sufficient", g, f, base, domain, tolerance, restrict_lower=False)


# ---------------------------------------------------------------------------
# harmful-cost construction


@dataclass
class HarmfulCostWitness:
    base: np.ndarray
    x_star: np.ndarray
    points: np.ndarray
    costs: np.ndarray
    lower_set: np.ndarray
    default_cost: float
    margins: dict = field(default_factory=dict)

    def cost(self):
        return TableCost(self.base, self.points, self.costs, self.default_cost)

    def verify(self, g, f):
        """Check the three defining inequalities on the probe set."""
        c_star = self.margins["c_star"]
        g_gap = g(self.base) - g(self.x_star)
        f_gap = f(self.base) - f(self.x_star)
        ok1 = 0 < g_gap < c_star
        ok2 = c_star < f_gap
        f_star = f(self.x_star)
        others = self.lower_set & ~np.all(self.points == self.x_star, axis=1)
        fx = np.asarray(f(self.points), dtype=np.float64)
        ok3 = bool(np.all(c_star + (f_star - fx[others]) < self.costs[others]))
        positive = bool(np.all(self.costs[~np.all(self.points == self.base, axis=1)] > 0))
        return bool(ok1 and ok2 and ok3 and positive)

    def to_rows(self):
        rows = []
        for p, c, low in zip(self.points, self.costs, self.lower_set):
            rows.append([*(float(v) for v in p), float(c), int(low)])
        return rows


def construct_harmful_cost(g, f, base, domain, tolerance=1e-9):
    """Cost function under which a surrogate best responder harms itself.

    Returns ``None`` when the necessary condition holds on the domain.
    """
    report = check_necessary(g, f, base, domain, tolerance)
    if report.holds:
        return None
    dom = _as_domain(domain)
    base = np.atleast_1d(np.asarray(base, dtype=np.float64))
    x_star, f_gap, g_gap = report.witness
    if not (0 < g_gap < f_gap) or not math.isfinite(f_gap):
        raise ConstructionFailedError(f"empty cost interval ({g_gap!r}, {f_gap!r})")
    c_star = 0.5 * (g_gap + f_gap)
    if not (g_gap < c_star < f_gap):
        raise ConstructionFailedError(f"interval ({g_gap!r}, {f_gap!r}) collapses in float")
    delta = 0.5 * (f_gap - c_star)

    pts = dom.points
    g_base = g(base)
    lower_set = np.asarray(g(pts), dtype=np.float64) < g_base
    is_star = np.all(pts == x_star, axis=1)
    is_base = np.all(pts == base, axis=1)
    fx = np.asarray(f(pts), dtype=np.float64)
    f_star = f(x_star)
    diff = f_star - fx
    costs = np.where(lower_set, c_star + diff + np.abs(diff) + delta, 0.0)
    costs[is_star] = c_star
    max_cost = float(np.max(costs[lower_set])) if np.any(lower_set) else c_star
    default = 1.0 + 2.0 * max_cost
    costs = np.where(lower_set | is_star, costs, default)
    costs[is_base] = 0.0
    witness = HarmfulCostWitness(
        base,
        np.asarray(x_star),
        pts,
        costs,
        lower_set,
        default,
        {"g_gap": float(g_gap), "f_gap": float(f_gap), "c_star": float(c_star), "delta": delta},
    )
    if not witness.verify(g, f):
        raise ConstructionFailedError("constructed cost fails the defining inequalities")
    return witness


# ---------------------------------------------------------------------------
# audits


@dataclass
class AuditTable:
    u_before: np.ndarray
    u_after: np.ndarray
    responses: np.ndarray
    explanations: list

    @property
    def delta(self):
        return self.u_after - self.u_before

    @property
    def harmed(self):
        return self.delta < -HARM_SLACK

    @property
    def harmed_fraction(self):
        return float(np.mean(self.harmed))

    def rows(self):
        return [
            [i, float(b), float(a), float(a - b), int(h)]
            for i, (b, a, h) in enumerate(zip(self.u_before, self.u_after, self.harmed))
        ]


def audit_no_harm(ctx, population, policy, g=None, *, box=None, seed=0, grid=4001):
    """Respond every agent to ``policy`` and record its exact utility change.

    Surrogate policies pair with best-responding agents, ARex policies with
    agents who choose between the recommendation and staying put.
    """
    g = ctx.model if g is None else g
    kind = getattr(policy, "kind", None)
    if kind == "surrogate" and population.reaction is not Reaction.SURROGATE:
        raise ConfigError("surrogate policies need surrogate best-responding agents")
    if kind == "arex" and population.reaction is not Reaction.AREX:
        raise ConfigError("ARex policies need ARex-choosing agents")
    if kind not in ("surrogate", "arex"):
        raise ConfigError(f"unsupported policy {type(policy).__name__}")

    u_before = population_utility(ctx, population, population.base)
    if kind == "arex":
        rng = np.random.default_rng(seed)
        X, Y = policy.explain_batch(g, population.base, rng)
        responses, _ = arex_response_batch(population, ctx, X, Y)
        explanations = [ARex(x, y) for x, y in zip(X, Y)]
    else:
        if box is None:
            raise ConfigError("surrogate audits need a search box")
        responses = np.empty_like(population.base)
        explanations = []
        for i in range(len(population)):
            agent = population.agent(i)
            e = policy.explain(g, agent.base)
            br = surrogate_best_response(
                agent, e.fn, box, higher_is_better=ctx.higher_is_better, grid=grid, seed=seed + i
            )
            responses[i] = br.x
            explanations.append(e)
    u_after = population_utility(ctx, population, responses)
    return AuditTable(u_before, u_after, responses, explanations)


def arex_equivalence(ctx, agents, x_star):
    """ARex inducing the non-harmful response ``x_star`` for a homogeneous group."""
    x_star = np.atleast_1d(np.asarray(x_star, dtype=np.float64))
    agents = [agents] if not isinstance(agents, (list, tuple)) else agents
    for a in agents:
        if true_utility(ctx, a, x_star) < true_utility(ctx, a, a.base):
            raise NotInNonHarmfulSetError("the response lowers some agent's true utility")
    return ARex(x_star, ctx.model(x_star))


def respond_all(ctx, agents, rec):
    return [arex_response(a, ctx, rec) for a in agents]
