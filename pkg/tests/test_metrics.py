from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from leofair.errors import ConsistencyError
from leofair.metrics import (
    SnapshotMetrics,
    aggregate,
    allocation_rate,
    average_sinr,
    disparity,
    disparity_from_counts,
    format_float,
    jain_index,
    json_safe,
    pearson,
    summarize,
)

CATS = np.repeat([0, 1, 2], [500, 200, 300])


def test_all_allocated():
    assert allocation_rate(np.ones(1000), CATS) == {"urban": 1.0, "suburban": 1.0, "rural": 1.0}


def test_reference_counts():
    ind = np.zeros(1000)
    ind[:140] = 1
    ind[700:823] = 1
    rates = allocation_rate(ind, CATS)
    assert rates["urban"] == pytest.approx(0.280)
    assert rates["rural"] == pytest.approx(0.410)


def test_empty_allocation():
    assert allocation_rate(np.zeros(1000), CATS) == {"urban": 0.0, "suburban": 0.0, "rural": 0.0}


def test_absent_category_omitted():
    assert allocation_rate(np.ones(4), np.array([0, 0, 2, 2])) == {"urban": 1.0, "rural": 1.0}


def test_allocation_map_with_unknown_user():
    with pytest.raises(ConsistencyError):
        allocation_rate({0: 1e6, 99: 1e6}, np.array([0, 2]), np.array([0, 1]))
    rates = allocation_rate({0: 1e6, 1: 0.0}, np.array([0, 2]), np.array([0, 1]))
    assert rates == {"urban": 1.0, "rural": 0.0}


def test_disparity_examples():
    assert disparity({"urban": 0.3, "rural": 0.3}) == 1.0
    assert disparity({"urban": 0.280, "rural": 0.410}) == pytest.approx(0.683, abs=5e-4)
    assert disparity({"urban": 0.393, "rural": 0.257}) == pytest.approx(1.529, abs=5e-4)


def test_disparity_sentinels():
    assert disparity({"urban": 0.2, "rural": 0.0}) == math.inf
    assert math.isnan(disparity({"urban": 0.0, "rural": 0.0}))
    sizes = {"urban": 5, "rural": 3}
    assert disparity_from_counts({"urban": 1, "rural": 0}, sizes) == math.inf
    assert math.isnan(disparity_from_counts({"urban": 0, "rural": 0}, sizes))
    with pytest.raises(ConsistencyError):
        disparity({"urban": 0.5})


def test_disparity_from_counts_matches_rates():
    sizes = {"urban": 500, "rural": 300}
    assert disparity_from_counts({"urban": 140, "rural": 123}, sizes) == pytest.approx(disparity({"urban": 0.28, "rural": 0.41}))


def test_jain_examples():
    assert jain_index([4.0, 4.0, 4.0]) == pytest.approx(1.0)
    assert jain_index([0.0, 0.0, 7.0, 0.0]) == pytest.approx(0.25)
    assert jain_index([1.0, 2.0, 3.0]) == pytest.approx(36 / 42)
    assert round(jain_index([1.0, 2.0, 3.0]), 3) == 0.857
    assert math.isnan(jain_index([0.0, 0.0]))


def test_average_sinr_examples():
    assert average_sinr([100.0]) == pytest.approx(20.0)
    assert average_sinr([100.0, 300.0]) == pytest.approx(23.01, abs=0.005)
    assert math.isnan(average_sinr([]))


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert math.isnan(pearson([1, 1, 1], [1, 2, 3]))


def test_summary_counts_sentinels():
    s = summarize([1.0, 3.0, math.inf, math.nan])
    assert (s["n"], s["n_finite"], s["n_inf"], s["n_undefined"]) == (4, 2, 1, 1)
    assert s["mean"] == 2.0 and s["std"] == 1.0


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 123456789.123):
        assert float(format_float(x)) == x
    assert format_float(math.inf) == "inf" and format_float(math.nan) == "nan"


def _record(policy, k, j, dgeo, sinr):
    return SnapshotMetrics(policy, k, j, 0.3, 0.3, 0.3, dgeo, 0.9, 0.3, sinr, sinr + 20, 1e9)


def test_aggregate_report():
    recs = [_record("p", k, j, 1.0 + k + 0.1 * j, 10.0 + k + j) for k in range(3) for j in range(4)]
    recs.append(_record("p", 2, 4, math.inf, 5.0))
    rep = aggregate(recs)["p"]
    assert rep["dgeo"]["n"] == 13 and rep["dgeo"]["n_inf"] == 1
    assert rep["dgeo_timeseries"] == pytest.approx([1.15, 2.15, 3.15])
    finite = [r for r in recs if math.isfinite(r.dgeo)]
    expected = stats.pearsonr([r.avg_sinr_db for r in finite], [r.dgeo for r in finite])[0]
    assert rep["pearson_sinr_dgeo"] == pytest.approx(expected, rel=1e-12)
    assert rep["dgeo_ratio_of_means"] == pytest.approx(1.0)
    json.dumps(json_safe(rep), allow_nan=False)


def test_metrics_row_uses_round_trip_floats():
    row = _record("fairshare", 1, 2, 0.1 + 0.2, 3.0).row()
    assert row[:3] == ["fairshare", 1, 2]
    assert row[6] == repr(0.1 + 0.2)


rate_lists = st.lists(st.floats(0.0, 1e9), min_size=1, max_size=50).filter(lambda v: sum(v) > 0)


@settings(max_examples=100, deadline=None)
@given(u=st.floats(1e-6, 1.0), r=st.floats(1e-6, 1.0), c=st.floats(1e-3, 1e3))
def test_disparity_scale_invariant(u, r, c):
    assert disparity({"urban": u * c, "rural": r * c}) == pytest.approx(disparity({"urban": u, "rural": r}), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(rates=rate_lists, c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_jain_invariances_and_bounds(rates, c, seed):
    j = jain_index(rates)
    assert 1.0 / len(rates) - 1e-12 <= j <= 1.0 + 1e-12
    assert jain_index([x * c for x in rates]) == pytest.approx(j, rel=1e-9)
    perm = list(np.random.default_rng(seed).permutation(rates))
    assert jain_index(perm) == pytest.approx(j, rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(au=st.integers(0, 500), ar=st.integers(0, 300), k=st.integers(1, 100))
def test_count_disparity_cancels_slot_factor(au, ar, k):
    sizes = {"urban": 500, "rural": 300}
    a = disparity_from_counts({"urban": au, "rural": ar}, sizes)
    b = disparity_from_counts({"urban": au * k, "rural": ar * k}, sizes)
    assert (a == b) or (math.isnan(a) and math.isnan(b))
