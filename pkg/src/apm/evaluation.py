"""Scoring of prediction streams: MAE, paired t-tests and per-period reports."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import WEEK, mmwr_week_start

log = logging.getLogger(__name__)


class EvalError(Exception):
    pass


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise EvalError(f"length mismatch: {pred.shape[0]} predictions vs {truth.shape[0]} truths")
    if pred.size == 0:
        raise EvalError("empty series")
    return float(np.mean(np.abs(pred - truth)))


# --- Student t via the regularized incomplete beta function ----------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float, xc: float | None = None) -> float:
    """Regularized incomplete beta function I_x(a, b).

    ``xc`` is ``1 - x`` when the caller knows it more precisely than the subtraction would give.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(xc))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf(b, a, xc) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    t2 = t * t
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2)))


@dataclass
class TTest:
    t: float
    p: float
    degenerate: bool = False


def paired_t_test(err_a: Sequence[float], err_b: Sequence[float]) -> TTest:
    """Two-sided paired t-test on ``err_a - err_b``."""
    a = np.asarray(err_a, dtype=float)
    b = np.asarray(err_b, dtype=float)
    if a.shape != b.shape:
        raise EvalError("paired series differ in length")
    n = a.size
    if n < 2:
        raise EvalError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        if mean == 0.0:
            return TTest(0.0, 1.0)
        return TTest(math.copysign(math.inf, mean), 0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    return TTest(t, t_two_sided_p(t, n - 1))


# --- periods --------------------------------------------------------------------

@dataclass
class PeriodSpec:
    label: str
    start: dt.date
    end: dt.date
    kind: str = "custom"
    expected_weeks: int | None = None

    def __post_init__(self):
        if isinstance(self.start, str):
            self.start = dt.date.fromisoformat(self.start)
        if isinstance(self.end, str):
            self.end = dt.date.fromisoformat(self.end)
        if self.start > self.end:
            raise ValueError(f"period {self.label}: start after end")
        if self.kind not in ("calendar_year", "flu_season", "custom"):
            raise ValueError(f"unknown period kind {self.kind!r}")

    def contains(self, week: dt.date) -> bool:
        return self.start <= week <= self.end


def calendar_years(first: int, last: int) -> list[PeriodSpec]:
    """One period per calendar year; a week belongs to the year of its start date."""
    return [PeriodSpec(str(y), dt.date(y, 1, 1), dt.date(y, 12, 31), "calendar_year")
            for y in range(first, last + 1)]


# Consecutive evaluation seasons of the GP comparison, anchored at MMWR 2008-W40.
GP_SEASON_WEEKS = (("2008-09", 48), ("2009-10", 57), ("2010-11", 52), ("2011-12", 52), ("2012-13", 65))


def flu_seasons(anchor: dt.date | None = None,
                lengths: Sequence[tuple[str, int]] = GP_SEASON_WEEKS) -> list[PeriodSpec]:
    start = anchor or mmwr_week_start(2008, 40)
    out = []
    for label, n in lengths:
        end = start + (n - 1) * WEEK
        out.append(PeriodSpec(label, start, end + dt.timedelta(days=6), "flu_season", n))
        start = end + WEEK
    return out


# --- reports --------------------------------------------------------------------

@dataclass
class PeriodRow:
    label: str
    n: int
    mae_a: float
    mae_b: float
    t_stat: float
    p_value: float
    degenerate: bool = False

    @property
    def mae_a_x100(self) -> float:
        return self.mae_a * 100.0

    @property
    def mae_b_x100(self) -> float:
        return self.mae_b * 100.0


@dataclass
class EvalReport:
    rows: list[PeriodRow]
    weeks: list[dt.date]
    abs_error_a: np.ndarray
    abs_error_b: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def row(self, label: str) -> PeriodRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _row(label, ea, eb) -> PeriodRow:
    if ea.size >= 2:
        test = paired_t_test(ea, eb)
    else:
        test = TTest(0.0, 1.0, degenerate=True)
    return PeriodRow(label, int(ea.size), float(ea.mean()), float(eb.mean()),
                     test.t, test.p, test.degenerate)


def build_report(weeks: Sequence[dt.date], pred_a: Sequence[float], pred_b: Sequence[float],
                 truth: Sequence[float], periods: Sequence[PeriodSpec] | None = None,
                 total_label: str | None = None) -> EvalReport:
    """MAE and paired t-test of stream a against stream b, per period plus overall.

    The overall row covers the union of the periods' weeks (all weeks when no
    periods are given).
    """
    weeks = list(weeks)
    pa, pb, y = (np.asarray(v, dtype=float) for v in (pred_a, pred_b, truth))
    if not (len(weeks) == pa.size == pb.size == y.size):
        raise EvalError("streams are not aligned to the truth series")
    ea, eb = np.abs(pa - y), np.abs(pb - y)
    rows, warnings = [], []
    union = np.zeros(len(weeks), dtype=bool)
    for period in periods or []:
        mask = np.array([period.contains(w) for w in weeks], dtype=bool)
        if not mask.any():
            msg = f"period {period.label} has no weeks; omitted"
            log.warning(msg)
            warnings.append(msg)
            continue
        if period.expected_weeks is not None and mask.sum() != period.expected_weeks:
            msg = f"period {period.label}: {int(mask.sum())} weeks, expected {period.expected_weeks}"
            log.warning(msg)
            warnings.append(msg)
        union |= mask
        rows.append(_row(period.label, ea[mask], eb[mask]))
    if not periods:
        union[:] = True
    if union.any():
        if total_label is None:
            if periods and len(rows) > 1:
                total_label = f"{rows[0].label.split('-')[0]}-{_last_year(rows[-1].label)}"
            else:
                total_label = "all"
        rows.append(_row(total_label, ea[union], eb[union]))
    return EvalReport(rows, weeks, ea, eb, warnings)


def _last_year(label: str) -> str:
    head, _, tail = label.partition("-")
    if tail and len(tail) == 2 and head[:2].isdigit():
        return head[:2] + tail
    return tail or head


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", "n", "mae_a_x100", "mae_b_x100", "t_stat", "p_value"])
        for r in report.rows:
            w.writerow([r.label, r.n, repr(r.mae_a_x100), repr(r.mae_b_x100), repr(r.t_stat), repr(r.p_value)])


def read_report_csv(path: str | Path) -> list[PeriodRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            PeriodRow(r["period"], int(r["n"]), float(r["mae_a_x100"]) / 100.0,
                      float(r["mae_b_x100"]) / 100.0, float(r["t_stat"]), float(r["p_value"]))
            for r in csv.DictReader(fh)
        ]


def write_error_series(weeks: Sequence[dt.date], abs_error: Sequence[float], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["week_start", "abs_error"])
        for week, e in zip(weeks, abs_error):
            w.writerow([week.isoformat(), repr(float(e))])


def read_error_series(path: str | Path) -> tuple[list[dt.date], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [dt.date.fromisoformat(r["week_start"]) for r in rows], np.array([float(r["abs_error"]) for r in rows])
