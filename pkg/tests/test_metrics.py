import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from arex.errors import ShapeError
from arex.metrics import (
    MetricReport,
    NormalizationError,
    bce,
    compliance_rate,
    f1_binary,
    mse,
    nmse,
    utility_change_summary,
)

reals = st.floats(-100, 100, allow_nan=False)


def test_perfect_predictions_have_zero_nmse():
    y = np.array([1.0, 2.0, 3.0])
    assert nmse(y, y, y) == 0.0


def test_nmse_hand_arithmetic():
    assert nmse(np.zeros(4), np.full(4, 2.0), np.full(4, 2.0)) == 2.0


def test_nmse_zero_normalizer():
    with pytest.raises(NormalizationError):
        nmse([1.0, 2.0], [1.0, 1.0], [1.0, -1.0])


def test_length_mismatch():
    with pytest.raises(ShapeError):
        mse([1.0], [1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=reals), arrays(np.float64, n, elements=reals), st.randoms())))
def test_nmse_is_permutation_invariant(data):
    p, y, rnd = data
    base = np.abs(y) + 1.0
    perm = list(range(len(p)))
    rnd.shuffle(perm)
    assert nmse(p[perm], y[perm], base) == pytest.approx(nmse(p, y, base), rel=1e-12, abs=1e-12)


def test_f1_perfect():
    assert f1_binary([1, 0, 1, 1], [1, 0, 1, 1]) == 1.0


def test_f1_all_wrong():
    assert f1_binary([0, 1, 0, 1], [1, 0, 1, 0]) == 0.0


def test_f1_counts():
    preds = [1] * 8 + [1] * 2 + [0] * 2 + [0] * 5
    labels = [1] * 8 + [0] * 2 + [1] * 2 + [0] * 5
    assert f1_binary(preds, labels) == pytest.approx(0.8)


def test_f1_no_positives_convention():
    assert f1_binary([0, 0], [0, 0], return_flag=True) == (0.0, "no-positives")


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.booleans(), min_size=n, max_size=n), st.lists(st.booleans(), min_size=n, max_size=n))))
def test_f1_range_and_perfect_iff(pair):
    p, y = pair
    score = f1_binary(p, y)
    assert 0.0 <= score <= 1.0
    assert (score == 1.0) == (p == y and any(y))


def test_compliance_extremes_and_fraction():
    rec = np.arange(200.0).reshape(100, 2)
    assert compliance_rate(rec, rec) == 1.0
    assert compliance_rate(rec + 1.0, rec) == 0.0
    resp = rec.copy()
    resp[84:] += 0.5
    assert compliance_rate(resp, rec) == 0.84


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=50))
def test_compliance_is_mean_indicator(follow):
    rec = np.arange(len(follow), dtype=np.float64)
    resp = np.where(follow, rec, rec - 1.0)
    rate = compliance_rate(resp, rec)
    assert 0.0 <= rate <= 1.0
    assert rate == np.mean(follow)


def test_bce_matches_hand_value_and_unit_weights():
    p = np.array([0.9, 0.2, 0.6, 0.4])
    y = np.array([1, 0, 1, 0])
    expected = -np.mean([np.log(0.9), np.log(0.8), np.log(0.6), np.log(0.6)])
    assert bce(p, y) == pytest.approx(expected)
    assert bce(p, y, weights=(1.0, 1.0)) == bce(p, y)


def test_utility_summary():
    s = utility_change_summary([-1.0, 0.0, 0.0, 2.0, -1e-13])
    assert s["n"] == 5 and s["harmed_fraction"] == 0.2 and s["max"] == 2.0


def test_metric_report_requires_population():
    with pytest.raises(ValueError):
        MetricReport("nmse", 0.1, 0)
