"""Experiment runner.

Each subcommand reads a config, writes its outputs into
``<root>/<kind>-seed<N>/`` and records a ``manifest.json`` next to them.
The output root is ``--out``, else the config's ``output_dir``, else
``$AREX_OUTPUT_ROOT``, else ``./runs``.  ``config.json`` in the run
directory is the resolved plan and can be passed back via ``--config``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .agents import (
    AgentRecord,
    QuadraticOutcome,
    Reaction,
    UtilityContext,
    misled_agent_cost,
    surrogate_best_response,
    true_utility,
)
from .dataio import (
    bootstrap_augment,
    fit_outcome_simulator,
    gen_noharm_population,
    load_config,
    load_credit,
    rrm_config,
    write_table,
    write_text,
)
from .errors import ArexError, ConfigError, ConstructionFailedError, NumericDivergenceError
from .explain import GaussianSampler, RandomArexPolicy, TaylorPolicy, base_center, shapley_two_feature
from .metrics import utility_change_summary
from .models import Polynomial, quartic
from .numkit import dumps_params
from .theory import (
    audit_no_harm,
    check_necessary,
    check_sufficient,
    construct_harmful_cost,
    grid_domain,
    sobol_domain,
)
from .train import (
    CreditEnvironment,
    SyntheticEnvironment,
    derive_seed,
    evaluate_state,
    holdout_population,
    prepare,
    rrm_fixed_ce,
    rrm_joint,
)

ENV_ROOT = "AREX_OUTPUT_ROOT"
COMMANDS = {
    "noharm": "noharm",
    "synthetic-rrm": "synthetic-rrm",
    "credit-rrm": "credit-rrm",
    "check": "theory-check",
}


@dataclass
class RunManifest:
    command: str
    seed: int
    config_snapshot: str
    started: str
    finished: str | None = None
    status: str = "running"
    files: list = field(default_factory=list)
    arms: dict = field(default_factory=dict)
    failed: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "command": self.command,
                "seed": self.seed,
                "config": "config.json",
                "config_snapshot": self.config_snapshot,
                "started": self.started,
                "finished": self.finished,
                "status": self.status,
                "files": self.files,
                "arms": self.arms,
                "failed": self.failed,
            },
            indent=2,
        ) + "\n"


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    arms: dict = field(default_factory=dict)
    failed: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def output_root(out=None, cfg=None):
    if out:
        return Path(out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(ENV_ROOT) or "runs")


def _run_arm(result, name, fn):
    """Run one arm, recording its time; a diverging arm is recorded as failed."""
    t0 = time.perf_counter()
    try:
        value = fn()
    except NumericDivergenceError as exc:
        result.failed[name] = str(exc)
        result.arms[name] = {"status": "failed", "seconds": round(time.perf_counter() - t0, 3)}
        return None
    result.arms[name] = {"status": "ok", "seconds": round(time.perf_counter() - t0, 3)}
    return value


# ---------------------------------------------------------------------------
# noharm


def cmd_noharm(cfg, run_dir):
    sec = cfg.noharm
    result = RunResult()
    g = quartic()
    ctx = UtilityContext(g, higher_is_better=False)
    arms = {
        "taylor": (gen_noharm_population(sec.n, cfg.seed), TaylorPolicy(sec.taylor_order)),
        "arex": (
            gen_noharm_population(sec.n, cfg.seed, reaction=Reaction.AREX),
            RandomArexPolicy(GaussianSampler([base_center], sec.arex_variance)),
        ),
    }
    rows, summary = [], []
    for name, (pop, policy) in arms.items():
        table = _run_arm(
            result, name,
            lambda pop=pop, policy=policy: audit_no_harm(
                ctx, pop, policy, box=sec.box, seed=derive_seed(cfg.seed, "noharm"), grid=sec.grid
            ),
        )
        if table is None:
            continue
        cols = zip(pop.base[:, 0], table.responses[:, 0], table.u_before, table.u_after)
        for i, (b, r, u0, u1) in enumerate(cols):
            rows.append([name, i, b, r, u0, u1, u1 - u0, int(u1 - u0 < -1e-12)])
        stats = utility_change_summary(table.delta)
        summary.append(f"[{name}]")
        summary.extend(f"{k}\t{v!r}" for k, v in stats.items())
        summary.append("")
        result.messages.append(f"{name}: harmed fraction {stats['harmed_fraction']:.2f}")
    write_table(
        run_dir / "utility_changes.csv",
        ["arm", "agent", "base", "response", "u_before", "u_after", "delta_u", "harmed"],
        rows,
    )
    write_text(run_dir / "summary.txt", "\n".join(summary))
    result.files += ["utility_changes.csv", "summary.txt"]
    return result


# ---------------------------------------------------------------------------
# RRM experiments


def _net_params(net):
    arrays = [net.x_shift, net.x_scale, net.y_shift, net.y_scale, *net.params()]
    return dumps_params(arrays, {"head": net.head, "layout": "x_shift x_scale y_shift y_scale weights/biases"})


def _run_rrm(cfg, env, run_dir, metric_names):
    result = RunResult()
    rconf = rrm_config(cfg)
    warm = _run_arm(result, "warmup", lambda: prepare(rconf, env))
    if warm is None:
        failed = ["joint"] if cfg.arms.joint else []
        failed += [f"ce-{lam:g}" for lam in cfg.arms.lambdas]
        for name in failed:
            result.failed[name] = "warm-up failed"
        return result
    test = holdout_population(rconf, env)
    states = []
    if cfg.arms.joint:
        states.append((_run_arm(result, "joint", lambda: rrm_joint(rconf, env, warm)), "joint", None))
    for lam in cfg.arms.lambdas:
        name = f"ce-{lam:g}"
        state = _run_arm(result, name, lambda lam=lam: rrm_fixed_ce(rconf, lam, env, warm.g0))
        states.append((state, name, lam))

    curves, metrics, params = [], [], {"g0": warm.g0, "xi": warm.xi.model}
    for state, name, lam in states:
        if state is None:
            continue
        for log in state.logs:
            curves.append([name, log.iteration, log.loss, log.deployed_loss, log.compliance])
        m = evaluate_state(state, env, rconf, test, lam)
        metrics.append([name, *(m[k] for k in metric_names)])
        params[f"{name}-g"] = state.g
        if state.sigma is not None:
            params[f"{name}-sigma"] = state.sigma
        result.messages.append(name + ": " + ", ".join(f"{k}={m[k]:.4g}" for k in metric_names))

    write_table(run_dir / "loss_curves.csv", ["arm", "iteration", "loss", "deployed_loss", "compliance"], curves)
    write_table(run_dir / "test_metrics.csv", ["arm", *metric_names], metrics)
    result.files += ["loss_curves.csv", "test_metrics.csv"]
    for name, net in params.items():
        if hasattr(net, "x_shift"):
            write_text(run_dir / "params" / f"{name}.txt", _net_params(net))
            result.files.append(f"params/{name}.txt")
    return result


def cmd_synthetic_rrm(cfg, run_dir):
    sec = cfg.synthetic
    env = SyntheticEnvironment(outcome=QuadraticOutcome(sec.A, sec.b, sec.c))
    return _run_rrm(cfg, env, run_dir, ["strategic_nmse", "strategic_mse", "compliance", "n"])


def credit_environment(cfg):
    """Load, fit the outcome simulator and build train/test pools."""
    sec = cfg.credit
    data = load_credit(sec.data)
    sim = fit_outcome_simulator(data, steps=sec.simulator_steps, lr=sec.simulator_lr)
    train = bootstrap_augment(data, sec.augment_rows, sec.jitter, derive_seed(cfg.seed, "augment-train"), sim)
    extra = bootstrap_augment(data, sec.test_rows, sec.jitter, derive_seed(cfg.seed, "augment-test"), sim)
    test = extra.rows(np.arange(len(data), len(extra)))
    return CreditEnvironment(train, test, sim, cost_scale=sec.cost_scale), sim


def cmd_credit_rrm(cfg, run_dir):
    env, sim = credit_environment(cfg)
    result = _run_rrm(cfg, env, run_dir, ["strategic_f1", "strategic_bce", "accuracy", "compliance", "n"])
    text = dumps_params([sim.weights, np.array([sim.bias])], {"model": "logistic"})
    write_text(run_dir / "params" / "simulator.txt", text)
    result.files.append("params/simulator.txt")
    return result


# ---------------------------------------------------------------------------
# condition checks


def worked_examples():
    """Text of the two-feature Shapley and misled-agent examples."""
    lines = ["# attribution sign flips with the data distribution", "model\tx1 - x2^2", "base\t16,4"]
    for rng in ((2.0, 5.0), (2.0, 8.0)):
        lines.append(f"phi2 with x2 ~ U({rng[0]:g}, {rng[1]:g})\t{shapley_two_feature([16.0, 4.0], rng)!r}")
    g = Polynomial([0.0, 0.0, 1.0])
    f = Polynomial([-25.0, 10.0])
    agent = AgentRecord(np.array([5.0]), cost=misled_agent_cost(), reaction=Reaction.SURROGATE)
    ctx = UtilityContext(g, higher_is_better=False)
    br = surrogate_best_response(agent, f, (-5.0, 10.0))
    x = float(br.x[0])
    report = check_necessary(g, f, [5.0], grid_domain(2.0, 5.0, 3001))
    xw, lhs, rhs = report.witness
    lines += [
        "",
        "# misled agent: model x^2, tangent surrogate 10x - 25 at base 5",
        f"surrogate best response\t{x!r}",
        f"u(g, {x:g})\t{true_utility(ctx, agent, [x])!r}",
        f"u(g, 5)\t{true_utility(ctx, agent, [5.0])!r}",
        f"harmed\t{int(true_utility(ctx, agent, [x]) < true_utility(ctx, agent, [5.0]))}",
        f"necessary condition\t{report.verdict}",
        f"witness x\t{float(xw[0])!r}",
        f"f gap (lhs)\t{lhs!r}",
        f"g gap (rhs)\t{rhs!r}",
    ]
    return "\n".join(lines) + "\n"


def cmd_check(cfg, run_dir, examples=False):
    sec = cfg.check
    result = RunResult()
    g, f = sec.model.build(), sec.surrogate.build()
    if len(sec.base) == 1:
        domain = grid_domain(sec.lower[0], sec.upper[0], sec.n_probes)
    else:
        domain = sobol_domain(sec.lower, sec.upper, sec.n_probes, seed=cfg.seed)
    nec = check_necessary(g, f, sec.base, domain, sec.tolerance)
    suf = check_sufficient(g, f, sec.base, domain, sec.tolerance)
    text = nec.to_text() + "\n" + suf.to_text()
    d = len(sec.base)
    header = [f"x{i + 1}" for i in range(d)] + ["cost", "lower_set"]
    rows = []
    if not nec.holds:
        try:
            witness = construct_harmful_cost(g, f, sec.base, domain, sec.tolerance)
        except ConstructionFailedError as exc:
            text += f"\nharmful_cost\tfailed\t{exc}\n"
        else:
            rows = witness.to_rows()
            text += "\nharmful_cost\tconstructed\n"
            text += "".join(f"{k}\t{v!r}\n" for k, v in witness.margins.items())
    write_text(run_dir / "condition_report.txt", text)
    write_table(run_dir / "witness.csv", header, rows)
    result.files += ["condition_report.txt", "witness.csv"]
    result.messages.append(f"necessary: {nec.verdict}; sufficient: {suf.verdict}")
    if examples:
        ex = worked_examples()
        write_text(run_dir / "examples.txt", ex)
        result.files.append("examples.txt")
        result.messages.append(ex.rstrip())
    return result


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="arex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML config or a run's config.json")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="output root directory")
        if name == "check":
            p.add_argument("--examples", action="store_true", help="also print the worked examples")
    return parser


def run(command, config_path, seed=None, out=None, examples=False):
    """Execute one command; returns ``(run_dir, manifest, result)``."""
    cfg = load_config(config_path, seed=seed)
    kind = COMMANDS[command]
    if cfg.kind != kind:
        raise ConfigError(f"kind: {cfg.kind!r} cannot run under '{command}' (expects {kind!r})")
    run_dir = output_root(out, cfg) / f"{cfg.kind}-seed{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = cfg.snapshot()
    manifest = RunManifest(command, cfg.seed, snapshot, _now())
    write_text(run_dir / "config.json", snapshot)
    write_text(run_dir / "manifest.json", manifest.to_json())
    try:
        if command == "noharm":
            result = cmd_noharm(cfg, run_dir)
        elif command == "synthetic-rrm":
            result = cmd_synthetic_rrm(cfg, run_dir)
        elif command == "credit-rrm":
            result = cmd_credit_rrm(cfg, run_dir)
        else:
            result = cmd_check(cfg, run_dir, examples)
    except Exception as exc:
        manifest.finished = _now()
        manifest.status = "error"
        manifest.failed = {"run": f"{type(exc).__name__}: {exc}"}
        write_text(run_dir / "manifest.json", manifest.to_json())
        raise
    manifest.finished = _now()
    manifest.files = ["config.json", *result.files]
    manifest.arms = result.arms
    manifest.failed = result.failed
    manifest.status = "failed" if result.failed else "ok"
    write_text(run_dir / "manifest.json", manifest.to_json())
    return run_dir, manifest, result


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run_dir, manifest, result = run(
            args.command, args.config, args.seed, args.out, getattr(args, "examples", False)
        )
    except (ArexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in result.messages:
        print(line)
    print(f"outputs: {run_dir}")
    if manifest.failed:
        print("failed arms: " + ", ".join(sorted(manifest.failed)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
