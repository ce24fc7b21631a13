import datetime as dt
import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from apm.evaluation import (
    EvalError, PeriodSpec, betainc, build_report, calendar_years, flu_seasons, mae, paired_t_test,
    read_error_series, read_report_csv, t_two_sided_p, write_error_series, write_report_csv,
)
from apm.ingest import mmwr_week_start

WEEK = dt.timedelta(weeks=1)


def test_mae_examples():
    assert mae([0.1, 0.2], [0.1, 0.2]) == 0.0
    assert mae([0.0, 0.0], [0.1, -0.3]) == pytest.approx(0.2)
    with pytest.raises(EvalError):
        mae([0.1], [0.1, 0.2])
    with pytest.raises(EvalError):
        mae([], [])


def test_t_test_identical_errors():
    r = paired_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert (r.t, r.p) == (0.0, 1.0)


def test_t_test_golden():
    r = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert r.t == pytest.approx(4.2426, abs=1e-4)
    assert r.p == pytest.approx(0.0132, abs=2e-4)
    ref = scipy.stats.ttest_rel([1, 2, 3, 4, 5], [0] * 5)
    assert r.t == pytest.approx(ref.statistic, rel=1e-12)
    assert r.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_t_test_constant_nonzero_difference():
    r = paired_t_test([0.2, 0.2], [0.1, 0.1])
    assert r.degenerate and r.p == 0.0 and r.t == math.inf


def test_t_test_needs_two_pairs():
    with pytest.raises(EvalError):
        paired_t_test([0.1], [0.2])


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0.05, 50), b=st.floats(0.05, 50), x=st.floats(0, 1))
def test_betainc_matches_reference(a, b, x):
    assert betainc(a, b, x) == pytest.approx(float(scipy.special.betainc(a, b, x)), rel=1e-9, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(-50, 50), df=st.integers(1, 500))
def test_t_p_value_matches_reference(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(2 * scipy.stats.t.sf(abs(t), df), rel=1e-8, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=40))
def test_t_test_antisymmetric(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    ab, ba = paired_t_test(a, b), paired_t_test(b, a)
    assert ab.t == -ba.t
    assert ab.p == ba.p


@settings(max_examples=100, deadline=None)
@given(n=st.integers(4, 120), cuts=st.lists(st.integers(1, 119), max_size=5), seed=st.integers(0, 10_000))
def test_total_mae_is_week_weighted_mean_of_periods(n, cuts, seed):
    rng = np.random.default_rng(seed)
    weeks = [dt.date(2004, 1, 4) + i * WEEK for i in range(n)]
    y, pa, pb = rng.uniform(0, 0.1, (3, n))
    bounds = sorted({0, n, *[c for c in cuts if c < n]})
    periods = [PeriodSpec(f"p{i}", weeks[lo], weeks[hi - 1]) for i, (lo, hi) in enumerate(zip(bounds, bounds[1:]))]
    rep = build_report(weeks, pa, pb, y, periods, total_label="total")
    parts, total = rep.rows[:-1], rep.row("total")
    assert sum(r.n for r in parts) == total.n == n
    for attr in ("mae_a", "mae_b"):
        weighted = sum(r.n * getattr(r, attr) for r in parts) / total.n
        assert weighted == pytest.approx(getattr(total, attr), rel=1e-12, abs=1e-15)
    assert total.mae_a == pytest.approx(mae(pa, y), rel=1e-12)


def test_flu_season_rows():
    start = mmwr_week_start(2008, 40)
    weeks = [start + i * WEEK for i in range(274)]
    rng = np.random.default_rng(0)
    y = rng.uniform(0, 0.05, 274)
    rep = build_report(weeks, y + 0.001, y + 0.002, y, flu_seasons(), "2008-2013")
    assert [r.label for r in rep.rows] == ["2008-09", "2009-10", "2010-11", "2011-12", "2012-13", "2008-2013"]
    assert [r.n for r in rep.rows] == [48, 57, 52, 52, 65, 274]
    assert rep.warnings == []
    assert rep.row("2008-2013").mae_a_x100 == pytest.approx(0.1, rel=1e-9)


def test_flu_seasons_contiguous():
    seasons = flu_seasons()
    for a, b in zip(seasons, seasons[1:]):
        assert b.start - a.end == dt.timedelta(days=1)
    assert seasons[0].start == dt.date(2008, 9, 28)


def test_calendar_year_rows_and_default_total_label():
    start = dt.date(2004, 1, 4)
    weeks = [start + i * WEEK for i in range(626)]
    y = np.full(626, 0.02)
    rep = build_report(weeks, y, y, y, calendar_years(2004, 2015))
    assert len(rep.rows) == 13
    assert rep.rows[-1].label == "2004-2015"
    assert all(r.p_value == 1.0 for r in rep.rows)


def test_empty_period_warns_and_is_omitted():
    weeks = [dt.date(2004, 1, 4) + i * WEEK for i in range(5)]
    y = np.zeros(5)
    rep = build_report(weeks, y, y, y, calendar_years(2003, 2004))
    assert [r.label for r in rep.rows] == ["2004", "all"]
    assert any("2003" in w for w in rep.warnings)


def test_misaligned_streams():
    with pytest.raises(EvalError):
        build_report([dt.date(2004, 1, 4)], [0.1, 0.2], [0.1], [0.1])


def test_report_csv_roundtrip(tmp_path):
    weeks = [dt.date(2004, 1, 4) + i * WEEK for i in range(60)]
    rng = np.random.default_rng(3)
    y = rng.uniform(0, 0.05, 60)
    rep = build_report(weeks, y + rng.normal(0, 0.001, 60), y + rng.normal(0, 0.003, 60), y,
                       calendar_years(2004, 2005))
    write_report_csv(rep, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "period,n,mae_a_x100,mae_b_x100,t_stat,p_value"
    rows = read_report_csv(tmp_path / "r.csv")
    assert [r.label for r in rows] == [r.label for r in rep.rows]
    for got, want in zip(rows, rep.rows):
        assert got.n == want.n
        assert got.mae_a == pytest.approx(want.mae_a, rel=1e-15)
        assert got.p_value == want.p_value
    write_error_series(weeks, rep.abs_error_a, tmp_path / "e.csv")
    w2, e2 = read_error_series(tmp_path / "e.csv")
    assert w2 == weeks and e2.tobytes() == rep.abs_error_a.tobytes()
