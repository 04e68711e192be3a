import warnings

import numpy as np
import pytest

from arex.agents import Population, QuadraticCost, UtilityContext, WeightedL1Cost, arex_response_batch
from arex.errors import ConfigError
from arex.explain import GaussianSampler, base_center, fixed_center
from arex.numkit import Tensor, value_and_grad
from arex.train import (
    ComplianceSet,
    CompliancePredictor,
    ConstantClassifier,
    RRMConfig,
    ScaledNet,
    SyntheticEnvironment,
    bce_loss,
    collect_compliance,
    derive_seed,
    evaluate_state,
    fit_network,
    holdout_population,
    joint_objective,
    prepare,
    pretrain,
    recommend,
    rrm_fixed_ce,
    rrm_joint,
    simulate_response,
    train_compliance,
)

SMALL = dict(
    iterations=2, batch_sizes=200, pretrain_size=300, compliance_size=600, test_size=400,
    inner_steps=20, pretrain_steps=150, compliance_steps=150, ce_steps=60, inner_batch=64,
)


def linear_g(X):
    return X @ np.array([0.5, -0.25, 1.0])


# -- pretraining ---------------------------------------------------------------


def test_pretraining_fits_linear_data_and_imitates_identity():
    rng = np.random.default_rng(0)
    X = rng.normal(1.0, 1.0, size=(400, 3))
    pre = pretrain(X, linear_g(X), steps=1500, lr=3e-3, batch_size=None, seed=1)
    assert pre.g_losses[-1] < 1e-3 * pre.g_losses[0]
    err = np.linalg.norm(pre.sigma(X) - X, axis=1).mean()
    assert err < 0.1 * np.linalg.norm(X, axis=1).mean()


def test_pretraining_needs_data():
    with pytest.raises(ValueError):
        pretrain(np.empty((0, 2)), np.empty(0))


# -- compliance data -----------------------------------------------------------


def quad_population(n, seed):
    rng = np.random.default_rng(seed)
    return Population(rng.normal(size=(n, 3)), np.zeros(n), QuadraticCost(rng.uniform(0.1, 1.0, n)))


def test_recommending_the_base_is_always_adopted():
    s = collect_compliance(quad_population(300, 0), linear_g, GaussianSampler([base_center], 0.0),
                           np.random.default_rng(0))
    assert s.adopted.mean() == 1.0


def test_infeasible_recommendations_are_refused():
    n = 100
    pop = Population(np.zeros((n, 3)), np.zeros(n),
                     WeightedL1Cost(1.0, [True, False, True], [-1] * 3, [1] * 3))
    s = collect_compliance(pop, linear_g, GaussianSampler([fixed_center(5.0)], 1.0), np.random.default_rng(1))
    assert s.adopted.sum() == 0


def test_collection_replays_and_records_gain():
    pop = quad_population(200, 2)
    sampler = GaussianSampler([base_center], 1.0)
    a = collect_compliance(pop, linear_g, sampler, np.random.default_rng(5))
    b = collect_compliance(pop, linear_g, sampler, np.random.default_rng(5))
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("base", "rec", "gain", "adopted"))
    np.testing.assert_allclose(a.gain, linear_g(a.base) - linear_g(a.rec))
    assert set(np.unique(a.adopted)) <= {0, 1}


def test_compliance_set_round_trips_samples():
    s = collect_compliance(quad_population(10, 3), linear_g, GaussianSampler([base_center], 1.0),
                           np.random.default_rng(0))
    again = ComplianceSet.from_samples(list(s))
    assert np.array_equal(again.features(), s.features())


# -- compliance predictor ------------------------------------------------------


def separable(n, seed):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n, 2))
    rec = rng.normal(size=(n, 2))
    gain = rng.normal(size=n)
    return ComplianceSet(base, rec, gain, (gain > 0).astype(np.int64))


def test_separable_compliance_is_learned():
    xi, losses = train_compliance(separable(2000, 0), steps=600, lr=1e-2, batch_size=256, seed=0)
    test = separable(1000, 1)
    acc = np.mean((xi(test.base, test.rec, test.gain) > 0.5) == test.adopted)
    assert acc > 0.95
    assert np.mean(losses[-20:]) < losses[0]


def test_single_label_gives_flagged_constant():
    s = separable(50, 2)
    s.adopted[:] = 1
    with pytest.warns(UserWarning, match="identical"):
        xi, _ = train_compliance(s)
    assert xi.degenerate
    assert np.all(xi(s.base, s.rec, s.gain) == 1.0)


def test_unit_class_weights_equal_plain_bce():
    p = Tensor(np.array([[0.2], [0.7], [0.9], [0.4]]))
    y = np.array([[0.0], [1.0], [1.0], [0.0]])
    assert bce_loss(p, y, (1.0, 1.0)).value == bce_loss(p, y).value


# -- simulated responses -------------------------------------------------------


def linear_g_2d(X):
    return np.asarray(X) @ np.array([1.0, 2.0])


def constant_xi(p):
    return CompliancePredictor(ConstantClassifier(p), degenerate=True)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_extreme_weights_pick_an_endpoint(p):
    base, rec = np.array([[0.3, -1.0]]), np.array([[2.0, 4.0]])
    r = simulate_response(constant_xi(p), linear_g_2d, base, rec)
    assert np.array_equal(r.soft, rec if p == 1.0 else base)
    assert np.array_equal(r.hard, rec if p == 1.0 else base)


def test_half_weight_is_midpoint():
    r = simulate_response(constant_xi(0.5), lambda X: np.asarray(X)[:, 0], np.array([[0.0]]), np.array([[2.0]]))
    assert r.soft.tolist() == [[1.0]]
    assert r.hard.tolist() == [[2.0]]


def test_soft_response_lies_on_segment():
    rng = np.random.default_rng(0)
    base, rec = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    s = separable(400, 0)
    xi, _ = train_compliance(s, steps=50, seed=0)
    r = simulate_response(xi, linear_g_2d, base, rec)
    t = r.weight[:, None]
    np.testing.assert_allclose(r.soft, base + t * (rec - base), atol=1e-12)
    assert np.all((r.weight >= 0) & (r.weight <= 1))
    assert all(np.array_equal(h, b) or np.array_equal(h, x) for h, b, x in zip(r.hard, base, rec))


# -- joint objective gradient --------------------------------------------------


def test_policy_receives_gradient_through_compliance():
    rng = np.random.default_rng(0)
    base = rng.normal(10.0, 1.0, size=(3, 3))
    y = rng.normal(5.0, 1.0, size=3)
    g = ScaledNet.create(base, 1, y_sample=y, hidden=4, seed=1)
    sigma = ScaledNet.create(base, 3, y_sample=base, hidden=4, seed=2)
    feats = np.column_stack([base, base + 1.0, rng.normal(size=3)])
    xi = CompliancePredictor(ScaledNet.create(feats, 1, hidden=4, head="sigmoid", seed=3))
    objective = joint_objective(g, sigma, xi, base, y, "squared")
    params = g.params() + sigma.params()
    ng = len(g.params())
    _, grads = value_and_grad(lambda *leaves: objective(list(leaves)), *params)
    k = ng + len(sigma.params()) - 1  # sigma's output bias
    assert np.any(grads[k] != 0)
    h = 1e-6
    for j in range(grads[k].size):
        up = [p.copy() for p in params]
        dn = [p.copy() for p in params]
        up[k].flat[j] += h
        dn[k].flat[j] -= h
        fd = (float(objective([Tensor(p) for p in up]).value) - float(objective([Tensor(p) for p in dn]).value)) / (2 * h)
        assert grads[k].flat[j] == pytest.approx(fd, rel=1e-4, abs=1e-8)


# -- training loops ------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run():
    cfg = RRMConfig(seed=3, **SMALL)
    env = SyntheticEnvironment(outcome_seed=3)
    warm = prepare(cfg, env)
    return cfg, env, warm


def test_joint_loop_logs_each_iteration(small_run):
    cfg, env, warm = small_run
    state = rrm_joint(cfg, env, warm)
    assert len(state.logs) == cfg.iterations
    assert [r.iteration for r in state.logs] == [1, 2]
    assert all(np.isfinite(r.loss) for r in state.logs)


def test_joint_compliance_comes_from_true_reactions(small_run):
    cfg, env, warm = small_run
    state = rrm_joint(cfg, env, warm)
    pop = env.population(cfg.batch_size(1), derive_seed(cfg.seed, "deploy", 1))
    x_rec = recommend(warm.sigma0, pop.base)
    _, adopted = arex_response_batch(pop, UtilityContext(warm.g0), x_rec, warm.g0(x_rec))
    assert state.logs[0].compliance == float(np.mean(adopted))


def test_single_iteration_is_the_first_step_of_longer_runs(small_run):
    cfg, env, warm = small_run
    one = rrm_joint(RRMConfig(**{**cfg.__dict__, "iterations": 1}), env, warm)
    two = rrm_joint(cfg, env, warm)
    assert one.logs[0].loss == two.logs[0].loss


def test_loops_replay_bitwise(small_run):
    cfg, env, warm = small_run
    a, b = rrm_joint(cfg, env, warm), rrm_joint(cfg, env, warm)
    assert a.losses == b.losses
    c, d = rrm_fixed_ce(cfg, 1.0, env, warm.g0), rrm_fixed_ce(cfg, 1.0, env, warm.g0)
    assert c.losses == d.losses


def test_baseline_lambdas_give_distinct_curves(small_run):
    cfg, env, warm = small_run
    curves = [tuple(rrm_fixed_ce(cfg, lam, env, warm.g0).losses) for lam in (0.1, 1.0, 4.0)]
    assert len(set(curves)) == 3


def test_baseline_rejects_bad_lambda(small_run):
    cfg, env, warm = small_run
    with pytest.raises(ConfigError):
        rrm_fixed_ce(cfg, 0.0, env, warm.g0)


def static_erm_losses(cfg, env, g, tag):
    """Plain risk minimization on the population that never moves."""
    losses = []
    for i in range(1, cfg.iterations + 1):
        pop = env.population(cfg.batch_size(i), derive_seed(cfg.seed, "deploy", i))
        y = env.outcomes(pop, pop.base)
        g, _ = fit_network(g, pop.base, y, "squared", cfg.inner_steps, cfg.lr, cfg.inner_batch,
                           seed=derive_seed(cfg.seed, tag, i))
        losses.append(float(np.mean((g(pop.base) - y) ** 2) / np.mean(env.base_outcomes(pop))))
    return losses


def test_immobile_agents_reduce_joint_training_to_erm():
    cfg = RRMConfig(seed=5, **SMALL)
    env = SyntheticEnvironment(outcome_seed=5, cost_multiplier=np.inf)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        warm = prepare(cfg, env)
    assert warm.xi.degenerate and warm.compliance.adopted.sum() == 0
    state = rrm_joint(cfg, env, warm)
    np.testing.assert_allclose(state.losses, static_erm_losses(cfg, env, warm.g0, "batch-joint"), rtol=0, atol=1e-6)


def test_huge_lambda_baseline_matches_static_erm(small_run):
    cfg, env, warm = small_run
    state = rrm_fixed_ce(cfg, 1e6, env, warm.g0)
    np.testing.assert_allclose(state.losses, static_erm_losses(cfg, env, warm.g0, "batch-ce"), rtol=0, atol=1e-4)


def test_holdout_evaluation_reports_metrics(small_run):
    cfg, env, warm = small_run
    state = rrm_joint(cfg, env, warm)
    m = evaluate_state(state, env, cfg, holdout_population(cfg, env))
    assert m["n"] == cfg.test_size and 0.0 <= m["compliance"] <= 1.0 and m["strategic_nmse"] >= 0


def test_config_validation():
    with pytest.raises(ConfigError):
        RRMConfig(iterations=0)
    with pytest.raises(ConfigError):
        RRMConfig(iterations=2, batch_sizes=[10])
    with pytest.raises(ConfigError):
        RRMConfig(loss="hinge")
