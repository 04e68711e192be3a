import json
import time
from pathlib import Path

import pytest

from arex import cli
from arex.dataio import read_table
from arex.errors import NumericDivergenceError

ROOT = Path(__file__).resolve().parents[1]
CREDIT = ROOT / "data" / "german.data"

TINY_RRM = """
[rrm]
iterations = 2
batch_sizes = 150
pretrain_size = 200
compliance_size = 300
test_size = 300
inner_steps = 10
pretrain_steps = 60
compliance_steps = 60
ce_steps = 40
inner_batch = 64

[arms]
lambdas = [0.5, 2.0]
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def files_of(run_dir):
    return {
        p.relative_to(run_dir).as_posix(): p.read_bytes()
        for p in sorted(run_dir.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }


@pytest.fixture
def synthetic_cfg(tmp_path):
    return write(tmp_path, "synthetic.toml", 'kind = "synthetic-rrm"\nseed = 2\n' + TINY_RRM)


@pytest.fixture
def credit_cfg(tmp_path):
    body = f'kind = "credit-rrm"\nseed = 1\n[credit]\ndata = "{CREDIT.as_posix()}"\naugment_rows = 500\n'
    body += "test_rows = 200\nsimulator_steps = 300\n" + TINY_RRM
    return write(tmp_path, "credit.toml", body)


# -- noharm --------------------------------------------------------------------


def test_noharm_default_run(tmp_path, capsys):
    cfg = write(tmp_path, "n.toml", 'kind = "noharm"\n')
    assert cli.main(["noharm", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 0
    run_dir = tmp_path / "runs" / "noharm-seed0"
    header, rows = read_table(run_dir / "utility_changes.csv")
    assert header[0] == "arm" and len(rows) == 200
    harmed = {arm: sum(int(r[-1]) for r in rows if r[0] == arm) / 100 for arm in ("taylor", "arex")}
    assert harmed["arex"] == 0.0
    assert 0.29 <= harmed["taylor"] <= 0.69
    assert "harmed fraction" in capsys.readouterr().out
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config_snapshot"] == (run_dir / "config.json").read_text()
    assert set(manifest["files"]) == {"config.json", "utility_changes.csv", "summary.txt"}


def test_noharm_seed_rerun_is_identical(tmp_path):
    cfg = write(tmp_path, "n.toml", 'kind = "noharm"\n[noharm]\nn = 30\n')
    a, _, _ = cli.run("noharm", cfg, seed=4, out=tmp_path / "a")
    b, _, _ = cli.run("noharm", cfg, seed=4, out=tmp_path / "b")
    assert a.name == "noharm-seed4"
    assert files_of(a) == files_of(b)


# -- theory checks -------------------------------------------------------------


def test_check_with_examples(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", 'kind = "theory-check"\n')
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path), "--examples"]) == 0
    out = capsys.readouterr().out
    assert "phi2 with x2 ~ U(2, 5)\t-3.0" in out
    assert "phi2 with x2 ~ U(2, 8)\t12.0" in out
    assert "u(g, 2)\t-31.0" in out and "u(g, 5)\t-25.0" in out
    report = (tmp_path / "theory-check-seed0" / "condition_report.txt").read_text()
    assert "verdict\tviolated" in report and "witness_x\t2.0" in report
    assert "witness_lhs\t30.0" in report and "witness_rhs\t21.0" in report
    _, rows = read_table(tmp_path / "theory-check-seed0" / "witness.csv")
    assert rows


def test_check_truthful_surrogate_holds(tmp_path):
    cfg = write(tmp_path, "c.toml", 'kind = "theory-check"\n[check.surrogate]\npolynomial = [0.0, 0.0, 1.0]\n')
    run_dir, manifest, _ = cli.run("check", cfg, out=tmp_path)
    report = (run_dir / "condition_report.txt").read_text()
    assert report.count("verdict\tholds-on-domain") == 2
    header, rows = read_table(run_dir / "witness.csv")
    assert header == ["x1", "cost", "lower_set"] and rows == []


def test_check_multidimensional_quadratic(tmp_path):
    text = """kind = "theory-check"
[check]
base = [1.0, 1.0]
lower = [-2.0, -2.0]
upper = [2.0, 2.0]
probes = 256
[check.model]
A = [[1.0, 0.0], [0.0, 1.0]]
[check.surrogate]
A = [[0.0, 0.0], [0.0, 0.0]]
b = [2.0, 2.0]
c = -2.0
"""
    run_dir, _, _ = cli.run("check", write(tmp_path, "q.toml", text), out=tmp_path)
    assert "verdict\tviolated" in (run_dir / "condition_report.txt").read_text()


# -- RRM commands --------------------------------------------------------------


def test_synthetic_rrm_smoke(tmp_path, synthetic_cfg):
    t0 = time.perf_counter()
    assert cli.main(["synthetic-rrm", "--config", str(synthetic_cfg), "--out", str(tmp_path / "r")]) == 0
    assert time.perf_counter() - t0 < 30
    run_dir = tmp_path / "r" / "synthetic-rrm-seed2"
    header, rows = read_table(run_dir / "test_metrics.csv")
    assert header == ["arm", "strategic_nmse", "strategic_mse", "compliance", "n"]
    assert [r[0] for r in rows] == ["joint", "ce-0.5", "ce-2"]
    _, curves = read_table(run_dir / "loss_curves.csv")
    assert len(curves) == 3 * 2
    assert (run_dir / "params" / "joint-sigma.txt").is_file()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert set(manifest["arms"]) == {"warmup", "joint", "ce-0.5", "ce-2"}


def test_synthetic_replay_from_snapshot(tmp_path, synthetic_cfg):
    first, _, _ = cli.run("synthetic-rrm", synthetic_cfg, out=tmp_path / "a")
    again, _, _ = cli.run("synthetic-rrm", first / "config.json", out=tmp_path / "b")
    assert files_of(first) == files_of(again)


def test_credit_rrm_smoke(tmp_path, credit_cfg):
    run_dir, manifest, _ = cli.run("credit-rrm", credit_cfg, out=tmp_path)
    header, rows = read_table(run_dir / "test_metrics.csv")
    assert header == ["arm", "strategic_f1", "strategic_bce", "accuracy", "compliance", "n"]
    assert all(int(r[-1]) == 200 for r in rows)
    assert (run_dir / "params" / "simulator.txt").is_file()
    assert manifest.status == "ok"


def test_diverging_arm_fails_alone(tmp_path, synthetic_cfg, monkeypatch, capsys):
    real = cli.rrm_fixed_ce

    def flaky(config, lam, env, g0):
        if lam == 2.0:
            raise NumericDivergenceError("boom", iteration=1)
        return real(config, lam, env, g0)

    monkeypatch.setattr(cli, "rrm_fixed_ce", flaky)
    code = cli.main(["synthetic-rrm", "--config", str(synthetic_cfg), "--out", str(tmp_path)])
    assert code == 1
    assert "failed arms: ce-2" in capsys.readouterr().err
    run_dir = tmp_path / "synthetic-rrm-seed2"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "failed" and list(manifest["failed"]) == ["ce-2"]
    _, rows = read_table(run_dir / "test_metrics.csv")
    assert [r[0] for r in rows] == ["joint", "ce-0.5"]


# -- errors and output locations -----------------------------------------------


def test_kind_mismatch_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "n.toml", 'kind = "noharm"\n')
    assert cli.main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "kind" in capsys.readouterr().err


def test_invalid_config_names_field(tmp_path, capsys):
    cfg = write(tmp_path, "n.toml", 'kind = "noharm"\n[noharm]\nn = 0\n')
    assert cli.main(["noharm", "--config", str(cfg)]) == 2
    assert "noharm.n" in capsys.readouterr().err


def test_missing_credit_file_exits_2_and_marks_manifest(tmp_path):
    cfg = write(tmp_path, "c.toml", 'kind = "credit-rrm"\n[credit]\ndata = "missing.data"\n')
    assert cli.main(["credit-rrm", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    manifest = json.loads((tmp_path / "credit-rrm-seed0" / "manifest.json").read_text())
    assert manifest["status"] == "error"


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["noharm", "--config", str(tmp_path / "nope.toml")]) == 2


def test_output_root_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, "n.toml", 'kind = "noharm"\n[noharm]\nn = 3\n')
    monkeypatch.setenv(cli.ENV_ROOT, str(tmp_path / "env"))
    run_dir, _, _ = cli.run("noharm", cfg)
    assert run_dir == tmp_path / "env" / "noharm-seed0"
    cfg2 = write(tmp_path, "m.toml", f'kind = "noharm"\noutput_dir = "{(tmp_path / "cfg").as_posix()}"\n[noharm]\nn = 3\n')
    assert cli.run("noharm", cfg2)[0] == tmp_path / "cfg" / "noharm-seed0"
    assert cli.run("noharm", cfg2, out=tmp_path / "flag")[0] == tmp_path / "flag" / "noharm-seed0"
    monkeypatch.delenv(cli.ENV_ROOT)
    monkeypatch.chdir(tmp_path)
    assert cli.run("noharm", cfg)[0] == Path("runs") / "noharm-seed0"


def test_shipped_configs_parse():
    from arex.dataio import load_config

    for path in sorted((ROOT / "configs").glob("*.toml")):
        cfg = load_config(path)
        assert cfg.kind in cli.COMMANDS.values()
