"""Repeated risk minimization with a jointly learned recommendation policy.

Joint-Opt pretrains the model ``g`` and the recommendation function
``sigma``, learns a compliance predictor ``xi`` from randomly sampled
recommendations, then alternates deployment and retraining.  Retraining
minimizes the loss of ``g`` at simulated responses

    x_hat = xi(x, sigma(x), g(x) - g(sigma(x))) * sigma(x) + (1 - xi) * x

jointly over ``g`` and ``sigma``.  The counterfactual baselines keep the
explanation rule fixed and retrain ``g`` alone on realized responses.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..agents import UtilityContext, arex_response_batch
from ..errors import ConfigError, NumericDivergenceError
from ..explain import GaussianSampler, base_center, counterfactual_batch
from ..metrics import bce, f1_binary, mse, nmse
from ..numkit import Tensor, clip
from .compliance import collect_compliance, train_compliance
from .env import derive_seed
from .nets import ScaledNet, bce_loss, fit_network, minimize, squared_loss

LOSSES = ("squared", "bce")


@dataclass
class RRMConfig:
    iterations: int = 30
    batch_sizes: int | list = 2000
    pretrain_size: int = 5000
    compliance_size: int = 20000
    test_size: int = 100000
    loss: str | None = None
    seed: int = 0
    inner_steps: int = 200
    lr: float = 1e-3
    hidden: int = 32
    pretrain_steps: int = 2000
    pretrain_batch: int | None = 500
    compliance_steps: int = 2000
    compliance_batch: int | None = 512
    compliance_lr: float = 3e-3
    sampler_variance: float = 4.0
    ce_steps: int = 500
    ce_lr: float = 0.05
    ce_tol: float = 1e-7
    inner_batch: int | None = 256
    sigma_lr: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        sizes = self.batch_sizes if isinstance(self.batch_sizes, (list, tuple)) else [self.batch_sizes]
        if isinstance(self.batch_sizes, (list, tuple)) and len(sizes) != self.iterations:
            raise ConfigError(f"{len(sizes)} batch sizes for {self.iterations} iterations")
        for name in ("pretrain_size", "compliance_size", "test_size", "inner_steps", "pretrain_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if any(int(s) < 1 for s in sizes):
            raise ConfigError("batch sizes must be positive")
        if self.loss is not None and self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")

    def batch_size(self, i):
        """Batch size of iteration ``i`` (1-based)."""
        if isinstance(self.batch_sizes, (list, tuple)):
            return int(self.batch_sizes[i - 1])
        return int(self.batch_sizes)


@dataclass
class IterationLog:
    iteration: int
    loss: float
    deployed_loss: float
    compliance: float
    seconds: float


@dataclass
class RRMState:
    arm: str
    g: object
    sigma: object = None
    xi: object = None
    logs: list = field(default_factory=list)

    @property
    def losses(self):
        return [r.loss for r in self.logs]

    @property
    def compliance(self):
        return [r.compliance for r in self.logs]


@dataclass
class Pretrained:
    g: object
    sigma: object
    g_losses: list
    sigma_losses: list

    def __iter__(self):
        return iter((self.g, self.sigma))


@dataclass
class Warmup:
    g0: object
    sigma0: object
    xi: object
    compliance: object
    pretrain: Pretrained
    xi_losses: list


# ---------------------------------------------------------------------------
# helpers


def _loss_kind(config, env):
    return config.loss or env.loss


def _report_loss(kind, pred, y, base_y):
    if kind == "squared":
        return nmse(pred, y, base_y)
    return bce(pred, y)


def _tensor_loss(kind, pred, y):
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    return squared_loss(pred, y) if kind == "squared" else bce_loss(pred, y)


def _project_tensor(x, base, constraints):
    """Differentiable projection: clip to the box and pin fixed features."""
    if constraints is None:
        return x
    if constraints.lower is not None:
        x = clip(x, constraints.lower, constraints.upper)
    if constraints.modifiable is not None:
        mask = constraints.modifiable.astype(np.float64)
        x = x * mask + base * (1.0 - mask)
    return x


def recommend(sigma, bases, constraints=None):
    x = np.asarray(sigma(bases), dtype=np.float64).reshape(bases.shape)
    return constraints.finalize(bases, x) if constraints is not None else x


def _deploy(env, g, pop, x_rec):
    y_rec = np.asarray(g(x_rec), dtype=np.float64)
    ctx = UtilityContext(g, env.higher_is_better)
    responses, adopted = arex_response_batch(pop, ctx, x_rec, y_rec)
    return responses, adopted, env.outcomes(pop, responses)


# ---------------------------------------------------------------------------
# pretraining and compliance


def pretrain(X, y, *, loss="squared", hidden=32, steps=2000, lr=1e-3, batch_size=500, seed=0):
    """Fit ``g0`` to ``(X, y)`` and ``sigma0`` to the identity map on ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0 or y.size == 0:
        raise ValueError("pretraining needs a nonempty dataset")
    head = "linear" if loss == "squared" else "sigmoid"
    g = ScaledNet.create(X, 1, y_sample=y, hidden=hidden, head=head, seed=derive_seed(seed, "init-g"))
    g, g_losses = fit_network(g, X, y, loss, steps, lr, batch_size, seed=derive_seed(seed, "batch-g"))
    d = X.shape[1]
    sigma = ScaledNet.create(X, d, y_sample=X, hidden=hidden, seed=derive_seed(seed, "init-sigma"))
    sigma, s_losses = fit_network(
        sigma, X, X, "squared", steps, lr, batch_size, seed=derive_seed(seed, "batch-sigma")
    )
    return Pretrained(g, sigma, g_losses, s_losses)


def compliance_sampler(g0, sigma0, env, variance, ce_steps=500, ce_lr=0.05, ce_tol=0.0):
    """Gaussian recommendations around the base, ``sigma0`` or a unit-lambda counterfactual."""

    def sigma_center(bases):
        return recommend(sigma0, bases, env.constraints)

    def ce_center(bases):
        X, _ = counterfactual_batch(
            g0, bases, 1.0, env.constraints,
            higher_is_better=env.higher_is_better, steps=ce_steps, lr=ce_lr, tol=ce_tol,
        )
        return X

    return GaussianSampler([base_center, sigma_center, ce_center], variance, env.constraints)


def prepare(config, env):
    """Pretraining and compliance-predictor training shared by all arms."""
    seed = config.seed
    kind = _loss_kind(config, env)
    d1 = env.population(config.pretrain_size, derive_seed(seed, "pretrain"))
    pre = pretrain(
        d1.base, env.base_outcomes(d1), loss=kind, hidden=config.hidden,
        steps=config.pretrain_steps, lr=config.lr, batch_size=config.pretrain_batch, seed=seed,
    )
    d2 = env.population(config.compliance_size, derive_seed(seed, "compliance"))
    sampler = compliance_sampler(
        pre.g, pre.sigma, env, config.sampler_variance, config.ce_steps, config.ce_lr, config.ce_tol
    )
    samples = collect_compliance(
        d2, pre.g, sampler, np.random.default_rng(derive_seed(seed, "sampler")), env.higher_is_better
    )
    xi, xi_losses = train_compliance(
        samples, steps=config.compliance_steps, lr=config.compliance_lr,
        batch_size=config.compliance_batch, hidden=config.hidden, seed=derive_seed(seed, "init-xi"),
    )
    return Warmup(pre.g, pre.sigma, xi, samples, pre, xi_losses)


# ---------------------------------------------------------------------------
# training loops


def joint_objective(g, sigma, xi, base, y, kind, constraints=None, batch_size=None, seed=0):
    """Loss of ``g`` at simulated responses, as a function of the parameter list
    ``g.params() + sigma.params()``.  With ``batch_size`` each call draws a
    fresh minibatch of rows."""
    ng = len(g.params())
    base = np.asarray(base, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = base.shape[0]
    rng = np.random.default_rng(seed)

    def objective(leaves, step=0):
        if batch_size is None or batch_size >= n:
            b, yb = base, y
        else:
            idx = rng.integers(0, n, size=batch_size)
            b, yb = base[idx], y[idx]
        gp, sp = leaves[:ng], leaves[ng:]
        xb = Tensor(b)
        xr = _project_tensor(sigma.forward(xb, sp), b, constraints)
        gain = g.forward(xb, gp) - g.forward(xr, gp)
        w = xi.forward(xb, xr, gain)
        x_hat = w * xr + (1.0 - w) * xb
        return _tensor_loss(kind, g.forward(x_hat, gp), yb)

    return objective


def rrm_joint(config, env, warm):
    """Joint-Opt: repeated minimization over ``(g, sigma)`` through the frozen ``xi``."""
    kind = _loss_kind(config, env)
    state = RRMState("joint", warm.g0, warm.sigma0, warm.xi)
    for i in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        g, sigma = state.g, state.sigma
        pop = env.population(config.batch_size(i), derive_seed(config.seed, "deploy", i))
        x_rec = recommend(sigma, pop.base, env.constraints)
        responses, adopted, y = _deploy(env, g, pop, x_rec)
        base_y = env.base_outcomes(pop)
        deployed = _report_loss(kind, g(responses), y, base_y)

        objective = joint_objective(
            g, sigma, warm.xi, pop.base, y, kind, env.constraints,
            config.inner_batch, derive_seed(config.seed, "batch-joint", i),
        )
        params = g.params() + sigma.params()
        try:
            ng = len(g.params())
            s_lr = config.lr if config.sigma_lr is None else config.sigma_lr
            rates = [config.lr] * ng + [s_lr] * (len(params) - ng)
            params, _ = minimize(objective, params, config.inner_steps, rates)
        except NumericDivergenceError as exc:
            raise NumericDivergenceError(f"joint update diverged: {exc}", iteration=i, dump=state) from None
        ng = len(g.params())
        state.g = g.with_params(params[:ng])
        state.sigma = sigma.with_params(params[ng:])
        full = joint_objective(g, sigma, warm.xi, pop.base, y, kind, env.constraints)
        final = float(full([Tensor(p) for p in params]).value)
        if kind == "squared":
            final /= float(np.mean(base_y))
        state.logs.append(
            IterationLog(i, final, deployed, float(np.mean(adopted)), time.perf_counter() - t0)
        )
    return state


def rrm_fixed_ce(config, lam, env, g0):
    """RRM on ``g`` alone while agents receive counterfactuals of the current ``g``."""
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    kind = _loss_kind(config, env)
    state = RRMState(f"ce-{lam:g}", g0)
    for i in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        g = state.g
        pop = env.population(config.batch_size(i), derive_seed(config.seed, "deploy", i))
        x_rec = ce_recommend(g, pop.base, lam, env, config)
        responses, adopted, y = _deploy(env, g, pop, x_rec)
        base_y = env.base_outcomes(pop)
        deployed = _report_loss(kind, g(responses), y, base_y)
        try:
            g, _ = fit_network(
                g, responses, y, kind, config.inner_steps, config.lr,
                config.inner_batch, seed=derive_seed(config.seed, "batch-ce", i),
            )
        except NumericDivergenceError as exc:
            raise NumericDivergenceError(f"{state.arm} update diverged: {exc}", iteration=i, dump=state) from None
        state.g = g
        final = _report_loss(kind, g(responses), y, base_y)
        state.logs.append(
            IterationLog(i, final, deployed, float(np.mean(adopted)), time.perf_counter() - t0)
        )
    return state


def ce_recommend(g, bases, lam, env, config):
    X, _ = counterfactual_batch(
        g, bases, lam, env.constraints,
        higher_is_better=env.higher_is_better, steps=config.ce_steps, lr=config.ce_lr, tol=config.ce_tol,
    )
    return X


# ---------------------------------------------------------------------------
# evaluation


def holdout_population(config, env):
    return env.population(config.test_size, derive_seed(config.seed, "test"), split="test")


def evaluate(env, g, x_rec, pop):
    """Strategic metrics of ``g`` after agents react to the recommendations ``x_rec``."""
    responses, adopted, y = _deploy(env, g, pop, x_rec)
    pred = np.asarray(g(responses), dtype=np.float64)
    out = {"compliance": float(np.mean(adopted)), "n": len(pop)}
    if env.loss == "squared":
        out["strategic_nmse"] = nmse(pred, y, env.base_outcomes(pop))
        out["strategic_mse"] = mse(pred, y)
    else:
        out["strategic_f1"] = f1_binary(pred >= 0.5, y)
        out["strategic_bce"] = bce(pred, y)
        out["accuracy"] = float(np.mean((pred >= 0.5) == (y == 1)))
    return out


def evaluate_state(state, env, config, pop, lam=None):
    if state.sigma is not None:
        x_rec = recommend(state.sigma, pop.base, env.constraints)
    else:
        x_rec = ce_recommend(state.g, pop.base, lam, env, config)
    return evaluate(env, state.g, x_rec, pop)
