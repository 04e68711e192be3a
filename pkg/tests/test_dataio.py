import json
from pathlib import Path

import numpy as np
import pytest

from arex.agents import LogisticOutcome, Reaction
from arex.dataio import (
    bootstrap_augment,
    fit_outcome_simulator,
    format_table,
    gen_noharm_population,
    gen_synthetic_population,
    load_config,
    load_credit,
    loads_config,
    parse_config,
    parse_credit,
    read_table,
    rrm_config,
    synthetic_outcome,
    write_table,
)
from arex.dataio.credit import TabularDataset
from arex.errors import ConfigError, ParseError, SchemaError, UninitializedSimulatorError

ROOT = Path(__file__).resolve().parents[1]
CREDIT = ROOT / "data" / "german.data"


@pytest.fixture(scope="module")
def credit():
    return load_credit(CREDIT)


@pytest.fixture(scope="module")
def simulator(credit):
    return fit_outcome_simulator(credit)


# -- synthetic populations -----------------------------------------------------


def test_noharm_population_distribution():
    pop = gen_noharm_population(100, seed=0)
    assert abs(pop.base.mean()) < 0.15
    assert pop.cost.alpha.min() >= 1.0 and pop.cost.alpha.max() <= 1.2
    assert pop.reaction is Reaction.SURROGATE


def test_single_agent_population():
    pop = gen_noharm_population(1, seed=5)
    assert len(pop) == 1 and pop.dim == 1


def test_populations_replay():
    a, b = gen_noharm_population(30, seed=9), gen_noharm_population(30, seed=9)
    assert np.array_equal(a.base, b.base) and np.array_equal(a.cost.alpha, b.cost.alpha)
    (p, h), (q, k) = gen_synthetic_population(50, seed=2), gen_synthetic_population(50, seed=2)
    assert np.array_equal(p.base, q.base) and np.array_equal(p.extra["y_base"], q.extra["y_base"])
    assert np.array_equal(h.A, k.A)


@pytest.fixture(scope="module")
def big_synthetic():
    pop, _ = gen_synthetic_population(10_000, seed=0)
    return pop


def test_synthetic_group_means(big_synthetic):
    pop = big_synthetic
    np.testing.assert_allclose(pop.base[pop.z == 3].mean(axis=0), [13.0] * 3, atol=0.2)


def test_synthetic_groups_are_uniform(big_synthetic):
    freq = np.bincount(big_synthetic.z, minlength=4) / len(big_synthetic)
    assert np.all(np.abs(freq - 0.25) <= 0.02)


def test_cheap_movers_exist_and_costs_track_group(big_synthetic):
    alpha = big_synthetic.cost.alpha
    assert np.quantile(alpha, 0.05) < 0.04
    assert np.corrcoef(alpha, big_synthetic.z)[0, 1] > 0.9


def test_synthetic_outcome_is_seeded_quadratic():
    h = synthetic_outcome(4)
    assert h.A.shape == (4, 4) and np.allclose(h.A, h.A.T)
    assert np.all(np.linalg.eigvalsh(h.A) >= -1e-12)


# -- credit data ---------------------------------------------------------------


def test_credit_shape(credit):
    assert len(credit) == 1000
    assert credit.n_features == 18
    assert int(credit.modifiable.sum()) == 8
    assert "age" not in credit.columns and "personal_status_sex" not in credit.columns


def test_credit_standardization(credit):
    for j in credit.numeric:
        col = credit.X[:, j]
        assert abs(col.mean()) < 1e-9
        assert abs(col.std() - 1.0) < 1e-9


def test_credit_bounds_cover_data(credit):
    assert np.all(credit.X >= credit.lower) and np.all(credit.X <= credit.upper)


def test_credit_categoricals_are_encoded_levels(credit):
    for j in credit.categorical:
        col = credit.X[:, j]
        assert np.array_equal(col, np.round(col))
        assert set(np.unique(col)) <= set(credit.levels[j])


def test_credit_labels_remapped(credit):
    assert set(np.unique(credit.y)) == {0, 1}
    assert credit.y.mean() == pytest.approx(0.7)


def good_row(label="1"):
    tokens = []
    from arex.dataio.credit import ATTRIBUTES

    for _, kind, _, _ in ATTRIBUTES:
        tokens.append("3" if kind == "numeric" else "A11")
    return " ".join(tokens + [label])


def test_wrong_column_count_is_schema_error():
    with pytest.raises(SchemaError):
        parse_credit([good_row(), "A11 6 A34"])


def test_malformed_value_reports_line():
    bad = good_row().replace(" 3 ", " x ", 1)
    with pytest.raises(ParseError) as err:
        parse_credit([good_row(), bad])
    assert err.value.line == 2


def test_bad_label():
    with pytest.raises(ParseError):
        parse_credit([good_row("3")])


def test_missing_credit_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_credit(tmp_path / "nope.data")


# -- outcome simulator ---------------------------------------------------------


def toy(X, y):
    d = X.shape[1]
    return TabularDataset(
        [f"f{i}" for i in range(d)], ["numeric"] * d, X, y,
        X.min(axis=0), X.max(axis=0), np.ones(d, dtype=bool),
    )


def test_simulator_on_separable_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(400, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int64)
    s = fit_outcome_simulator(toy(X, y))
    assert np.mean((s.probability(X) > 0.5) == y) > 0.99


def test_simulator_on_constant_labels():
    X = np.random.default_rng(1).normal(size=(20, 2))
    s = fit_outcome_simulator(toy(X, np.ones(20, dtype=np.int64)))
    assert s.degenerate and np.allclose(s.probability(X), s.probability(X[:1]))


def test_simulator_beats_majority_on_credit(credit, simulator):
    acc = np.mean((simulator.probability(credit.X) > 0.5) == credit.y)
    assert acc > 0.70
    p = np.clip(simulator.probability(credit.X), 1e-12, 1 - 1e-12)
    model_bce = -np.mean(credit.y * np.log(p) + (1 - credit.y) * np.log(1 - p))
    m = credit.y.mean()
    const_bce = -(m * np.log(m) + (1 - m) * np.log(1 - m))
    assert model_bce < const_bce


# -- augmentation --------------------------------------------------------------


def test_zero_augmentation_is_identity(credit):
    out = bootstrap_augment(credit, 0, jitter=0.0)
    assert np.array_equal(out.X, credit.X) and np.array_equal(out.y, credit.y)


def test_augmentation_size_and_bounds(credit, simulator):
    out = bootstrap_augment(credit, 9000, seed=3, simulator=simulator)
    assert len(out) == 10_000
    assert np.all(out.X >= credit.lower) and np.all(out.X <= credit.upper)
    for j in credit.categorical:
        assert set(np.unique(out.X[:, j])) <= set(credit.levels[j])


def test_augmentation_replays(credit, simulator):
    a = bootstrap_augment(credit, 500, seed=8, simulator=simulator)
    b = bootstrap_augment(credit, 500, seed=8, simulator=simulator)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_augmentation_needs_simulator(credit):
    with pytest.raises(UninitializedSimulatorError):
        bootstrap_augment(credit, 10, simulator=LogisticOutcome())


# -- configuration -------------------------------------------------------------


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError, match=r"rrm\.iteratoins"):
        loads_config('kind = "synthetic-rrm"\n[rrm]\niteratoins = 3\n')


def test_section_for_wrong_kind():
    with pytest.raises(ConfigError, match="does not apply"):
        parse_config({"kind": "noharm", "rrm": {}})


def test_field_validation_messages():
    with pytest.raises(ConfigError, match=r"arms\.lambdas"):
        parse_config({"kind": "synthetic-rrm", "arms": {"lambdas": [1.0, -2.0]}})
    with pytest.raises(ConfigError, match="batch sizes"):
        parse_config({"kind": "synthetic-rrm", "rrm": {"iterations": 2, "batch_sizes": [5]}})
    with pytest.raises(ConfigError, match="together"):
        parse_config({"kind": "synthetic-rrm", "synthetic": {"c": 1.0}})


def test_bad_toml():
    with pytest.raises(ConfigError, match="cannot parse"):
        loads_config("kind = ")


def test_resolution_fills_defaults_and_outcome(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('kind = "synthetic-rrm"\nseed = 4\n[rrm]\niterations = 3\n')
    cfg = load_config(path)
    assert cfg.arms.lambdas == [0.1, 1.0, 4.0]
    assert cfg.synthetic.outcome_seed == 4
    assert np.allclose(cfg.synthetic.A, synthetic_outcome(4).A)
    assert rrm_config(cfg).iterations == 3 and rrm_config(cfg).seed == 4


def test_seed_override_changes_outcome_draw(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('kind = "synthetic-rrm"\n')
    a, b = load_config(path, seed=1), load_config(path, seed=2)
    assert a.seed == 1 and b.seed == 2 and a.synthetic.A != b.synthetic.A


def test_credit_path_resolves_relative_to_config(tmp_path):
    path = tmp_path / "sub" / "c.toml"
    path.parent.mkdir()
    path.write_text('kind = "credit-rrm"\n[credit]\ndata = "../german.data"\n')
    assert load_config(path).credit.data == str((tmp_path / "german.data").resolve())


def test_snapshot_round_trip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('kind = "synthetic-rrm"\nseed = 3\n[arms]\nlambdas = [0.5]\n')
    cfg = load_config(path)
    snap = tmp_path / "config.json"
    snap.write_text(cfg.snapshot())
    again = load_config(snap)
    assert again.snapshot() == cfg.snapshot()
    assert json.loads(cfg.snapshot())["arms"]["lambdas"] == [0.5]


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


def test_check_dimension_validation():
    with pytest.raises(ConfigError, match="dimension"):
        parse_config({"kind": "theory-check", "check": {"base": [1.0, 2.0]}})


# -- tables --------------------------------------------------------------------


def test_table_round_trip(tmp_path):
    path = write_table(tmp_path / "t.csv", ["a", "b", "c"], [[1, 0.1, True], [2, 1 / 3, False]])
    header, rows = read_table(path)
    assert header == ["a", "b", "c"]
    assert rows == [["1", "0.1", "1"], ["2", repr(1 / 3), "0"]]
    assert float(rows[1][1]) == 1 / 3
    assert not (tmp_path / "t.csv.tmp").exists()


def test_table_row_width_checked():
    with pytest.raises(ValueError):
        format_table(["a"], [[1, 2]])
