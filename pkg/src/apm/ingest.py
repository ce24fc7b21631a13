"""Weekly frames, raw GFT/CDC parsing, lag alignment and the canonical CSV format."""

from __future__ import annotations

import csv
import datetime as dt
import fnmatch
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

WEEK = dt.timedelta(days=7)


class IngestError(Exception):
    """Raised for any malformed or unusable input data."""


class ParseError(IngestError):
    pass


class SchemaError(IngestError):
    pass


class AlignmentError(IngestError):
    pass


@dataclass
class TimeSeriesFrame:
    """Week-indexed feature matrix.

    ``columns`` maps a source name to a float array with one slot per week;
    missing values are NaN. ``target`` is the fractional ILI rate, or None.
    """

    weeks: list[dt.date]
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    target: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.weeks)
        for a, b in zip(self.weeks, self.weeks[1:]):
            if b - a != WEEK:
                raise IngestError(f"weeks must be 7 days apart: {a} -> {b}")
        cols = {}
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise IngestError(f"column {name!r} has {arr.shape[0]} values for {n} weeks")
            cols[name] = arr
        self.columns = cols
        if self.target is not None:
            t = np.asarray(self.target, dtype=float)
            if t.shape != (n,):
                raise IngestError("target length does not match weeks")
            present = t[~np.isnan(t)]
            if np.any((present < 0) | (present > 1)):
                raise IngestError("target values must lie in [0, 1]")
            self.target = t

    def __len__(self) -> int:
        return len(self.weeks)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def head(self, n: int) -> "TimeSeriesFrame":
        """The first ``n`` weeks, sharing memory with this frame."""
        return TimeSeriesFrame._unchecked(
            self.weeks[:n],
            {k: v[:n] for k, v in self.columns.items()},
            None if self.target is None else self.target[:n],
        )

    def rows(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame._unchecked(
            self.weeks[start:stop],
            {k: v[start:stop] for k, v in self.columns.items()},
            None if self.target is None else self.target[start:stop],
        )

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.columns[c] for c in names])

    def select(self, patterns: Iterable[str]) -> list[str]:
        """Column names matching any glob pattern, in frame order."""
        patterns = list(patterns)
        return [c for c in self.columns if any(fnmatch.fnmatchcase(c, p) for p in patterns)]

    def row(self, i: int) -> dict[str, float]:
        return {k: float(v[i]) for k, v in self.columns.items()}

    def equals(self, other: "TimeSeriesFrame") -> bool:
        if self.weeks != other.weeks or list(self.columns) != list(other.columns):
            return False
        for k in self.columns:
            if not np.array_equal(self.columns[k], other.columns[k], equal_nan=True):
                return False
        if (self.target is None) != (other.target is None):
            return False
        return self.target is None or np.array_equal(self.target, other.target, equal_nan=True)

    @classmethod
    def _unchecked(cls, weeks, columns, target):
        obj = cls.__new__(cls)
        obj.weeks, obj.columns, obj.target = weeks, columns, target
        return obj


@dataclass
class AlignmentSpec:
    lag_weeks: int = 2
    feature_sources: list[str] = field(default_factory=lambda: ["*"])
    target_source: str = "cdc_ili"

    def __post_init__(self):
        if self.lag_weeks < 0:
            raise ValueError("lag_weeks must be nonnegative")


# --- MMWR epidemiological weeks -------------------------------------------------

def mmwr_week1_start(year: int) -> dt.date:
    """Sunday starting MMWR week 1: the week containing January 4."""
    jan4 = dt.date(year, 1, 4)
    return jan4 - dt.timedelta(days=(jan4.weekday() + 1) % 7)


def mmwr_week_start(year: int, week: int) -> dt.date:
    if not 1 <= week <= 53:
        raise ValueError(f"epidemiological week {week} outside 1..53")
    start = mmwr_week1_start(year) + (week - 1) * WEEK
    if week == 53 and start >= mmwr_week1_start(year + 1):
        raise ValueError(f"year {year} has no epidemiological week 53")
    return start


def mmwr_week(date: dt.date) -> tuple[int, int]:
    year = date.year + 1
    while mmwr_week1_start(year) > date:
        year -= 1
    return year, (date - mmwr_week1_start(year)).days // 7 + 1


# --- raw parsers ----------------------------------------------------------------

def _parse_float(cell: str, where: str, missing: tuple[str, ...] = ("",)) -> float:
    cell = cell.strip()
    if cell in missing:
        return math.nan
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r} at {where}") from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {cell!r} at {where}")
    return value


def _frame_from_rows(rows: dict[dt.date, list[float]], names: list[str],
                     targets: dict[dt.date, float] | None = None) -> TimeSeriesFrame:
    if not rows:
        raise ParseError("no data rows")
    first, last = min(rows), max(rows)
    if any((d - first).days % 7 for d in rows):
        raise ParseError("dates are not on a common weekly grid")
    weeks = [first + i * WEEK for i in range((last - first).days // 7 + 1)]
    cols = {n: np.full(len(weeks), np.nan) for n in names}
    target = None if targets is None else np.full(len(weeks), np.nan)
    for i, w in enumerate(weeks):
        values = rows.get(w)
        if values is None:
            continue
        for n, v in zip(names, values):
            cols[n][i] = v
        if target is not None:
            target[i] = targets[w]
    return TimeSeriesFrame(weeks, cols, target)


def parse_gft_csv(path: str | Path) -> TimeSeriesFrame:
    """Parse a Google Flu Trends download (``Date,<Region>,...``).

    Preamble lines before the ``Date`` header are skipped. Weeks absent from the
    file but inside its date range become all-missing rows.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if row and row[0].strip() == "Date":
                header = [c.strip() for c in row]
                break
        if header is None:
            raise SchemaError(f"{path}: no header row starting with 'Date'")
        names = header[1:]
        if len(set(names)) != len(names):
            raise SchemaError(f"{path}: duplicate region columns")
        rows: dict[dt.date, list[float]] = {}
        for row in reader:
            if not row or not any(c.strip() for c in row):
                continue
            lineno = reader.line_num
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"{path}: malformed date {row[0]!r} in row {lineno}") from None
            if date in rows:
                raise ParseError(f"{path}: duplicate week {date} in row {lineno}")
            cells = row[1:] + [""] * (len(names) - len(row) + 1)
            rows[date] = [
                _parse_float(c, f"{path} row {lineno} column {n!r}")
                for n, c in zip(names, cells)
            ]
    return _frame_from_rows(rows, names)


CDC_COLUMNS = {
    "YEAR": None,
    "WEEK": None,
    "%UNWEIGHTEDILI": "cdc_ili",
    "AGE0-4": "cdc_age_0_4",
    "AGE5-24": "cdc_age_5_24",
    "AGE25-64": "cdc_age_25_64",
    "AGE65": "cdc_age_65",
    "TOTALPATIENTS": "cdc_total_patients",
    "NUM.OFPROVIDERS": "cdc_providers",
}


def _norm_header(h: str) -> str:
    return "".join(h.split()).upper()


def parse_cdc_csv(path: str | Path) -> TimeSeriesFrame:
    """Parse a CDC ILINet national download.

    The target is ``%UNWEIGHTED ILI / 100``; the same fraction is also kept as
    feature ``cdc_ili`` so it can be lag-shifted by :func:`align`. Cells marked
    ``X`` (not reported) are missing.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        index = None
        for row in reader:
            norm = [_norm_header(c) for c in row]
            if "YEAR" in norm and "WEEK" in norm:
                index = {}
                for i, h in enumerate(norm):
                    index.setdefault(h, i)
                break
        if index is None:
            raise SchemaError(f"{path}: no header row with YEAR and WEEK")
        missing = [k for k in CDC_COLUMNS if k not in index]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {missing}")
        names = [v for v in CDC_COLUMNS.values() if v]
        rows: dict[dt.date, list[float]] = {}
        targets: dict[dt.date, float] = {}
        for row in reader:
            if not row or not any(c.strip() for c in row):
                continue
            lineno = reader.line_num

            def cell(key):
                i = index[key]
                return row[i] if i < len(row) else ""

            try:
                year, week = int(cell("YEAR")), int(cell("WEEK"))
            except ValueError:
                raise ParseError(f"{path}: bad YEAR/WEEK in row {lineno}") from None
            try:
                date = mmwr_week_start(year, week)
            except ValueError as e:
                raise ParseError(f"{path}: {e} in row {lineno}") from None
            if date in rows:
                raise ParseError(f"{path}: duplicate week {year}-W{week:02d} in row {lineno}")
            values = []
            for key, name in CDC_COLUMNS.items():
                if name is None:
                    continue
                v = _parse_float(cell(key), f"{path} row {lineno} column {key!r}", ("", "X"))
                if key.startswith("%"):
                    v /= 100.0
                values.append(v)
            rows[date] = values
            targets[date] = values[0]
    return _frame_from_rows(rows, names, targets)


# --- alignment ------------------------------------------------------------------

def merge_frames(*frames: TimeSeriesFrame) -> TimeSeriesFrame:
    """Outer-join feature columns of several frames on their week grid."""
    frames = [f for f in frames if len(f)]
    if not frames:
        raise AlignmentError("nothing to merge")
    first = min(f.weeks[0] for f in frames)
    last = max(f.weeks[-1] for f in frames)
    if any((f.weeks[0] - first).days % 7 for f in frames):
        raise AlignmentError("frames are on different weekly grids")
    n = (last - first).days // 7 + 1
    weeks = [first + i * WEEK for i in range(n)]
    cols: dict[str, np.ndarray] = {}
    for f in frames:
        off = (f.weeks[0] - first).days // 7
        for name, v in f.columns.items():
            if name in cols:
                raise AlignmentError(f"duplicate column {name!r}")
            a = np.full(n, np.nan)
            a[off:off + len(f)] = v
            cols[name] = a
    return TimeSeriesFrame(weeks, cols)


def impute(values: np.ndarray) -> np.ndarray:
    """Last observation carried forward; leading gaps take the first observation."""
    out = np.array(values, dtype=float)
    ok = ~np.isnan(out)
    if not ok.any():
        return out
    idx = np.where(ok, np.arange(len(out)), -1)
    np.maximum.accumulate(idx, out=idx)
    first = np.argmax(ok)
    idx[idx < 0] = first
    return out[idx]


def align(gft: TimeSeriesFrame, cdc: TimeSeriesFrame, spec: AlignmentSpec | None = None) -> TimeSeriesFrame:
    """Join unshifted GFT columns with CDC columns shifted forward by ``lag_weeks``.

    The target at week t is the CDC target at week t. The output runs from the
    first to the last week having a target and at least one observed feature
    from each source; feature gaps inside that range are imputed by
    :func:`impute`.
    """
    spec = spec or AlignmentSpec()
    if not len(gft) or not len(cdc):
        raise AlignmentError("empty input frame")
    if cdc.target is None:
        raise AlignmentError("CDC frame carries no target")
    if (gft.weeks[0] - cdc.weeks[0]).days % 7:
        raise AlignmentError("GFT and CDC weeks are on different weekly grids")

    lag = spec.lag_weeks
    cdc_index = {w: i for i, w in enumerate(cdc.weeks)}
    gft_index = {w: i for i, w in enumerate(gft.weeks)}
    gft_names = gft.select(spec.feature_sources)
    cdc_names = cdc.select(spec.feature_sources)
    clash = set(gft_names) & set(cdc_names)
    if clash:
        raise AlignmentError(f"column names present in both sources: {sorted(clash)}")

    candidates = sorted(set(cdc.weeks) & set(gft.weeks))
    if not candidates:
        raise AlignmentError(
            f"no overlapping weeks: GFT {gft.weeks[0]}..{gft.weeks[-1]}, "
            f"CDC {cdc.weeks[0]}..{cdc.weeks[-1]}"
        )

    def features_at(w):
        gi = gft_index.get(w)
        g = [gft.columns[c][gi] if gi is not None else math.nan for c in gft_names]
        ci = cdc_index.get(w - lag * WEEK)
        c = [cdc.columns[n][ci] if ci is not None else math.nan for n in cdc_names]
        return g + c

    def eligible(w, feats):
        g, c = feats[:len(gft_names)], feats[len(gft_names):]
        # every source must contribute at least one observation
        return not ((g and all(math.isnan(v) for v in g)) or (c and all(math.isnan(v) for v in c)))

    rows = [(w, cdc.target[cdc_index[w]], features_at(w)) for w in candidates]
    ok = [not math.isnan(y) and eligible(w, f) for w, y, f in rows]
    if not any(ok):
        raise AlignmentError("no week has both a target and a feature")
    first = ok.index(True)
    last = len(ok) - 1 - ok[::-1].index(True)
    keep = rows[first:last + 1]
    for (a, ya, _), (b, yb, _) in zip(keep, keep[1:]):
        if b - a != WEEK:
            raise AlignmentError(f"gap in aligned stream between {a} and {b}")
        if math.isnan(yb):
            raise AlignmentError(f"missing target inside the aligned range at {b}")

    names = gft_names + cdc_names
    mat = np.array([f for _, _, f in keep], dtype=float).reshape(len(keep), len(names))
    cols = {}
    for j, name in enumerate(names):
        col = mat[:, j]
        if np.isnan(col).all():
            log.warning("dropping column %r: no observations in aligned range", name)
            continue
        cols[name] = impute(col)
    return TimeSeriesFrame([w for w, _, _ in keep], cols, np.array([y for _, y, _ in keep]))


# --- canonical CSV --------------------------------------------------------------

def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_canonical(frame: TimeSeriesFrame, path: str | Path) -> None:
    path = Path(path)
    target = frame.target if frame.target is not None else np.full(len(frame), np.nan)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["week_start", "target", *frame.columns])
        cols = list(frame.columns.values())
        for i, week in enumerate(frame.weeks):
            w.writerow([week.isoformat(), _fmt(target[i]), *(_fmt(c[i]) for c in cols)])


def read_canonical(path: str | Path) -> TimeSeriesFrame:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["week_start", "target"]:
            raise SchemaError(f"{path}: header must start with week_start,target")
        names = header[2:]
        weeks, target, values = [], [], []
        for row in reader:
            if not row:
                continue
            lineno = reader.line_num
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            try:
                weeks.append(dt.date.fromisoformat(row[0]))
            except ValueError:
                raise ParseError(f"{path}: malformed date {row[0]!r} in row {lineno}") from None
            target.append(_parse_float(row[1], f"{path} row {lineno} column 'target'"))
            values.append([_parse_float(c, f"{path} row {lineno} column {n!r}")
                           for n, c in zip(names, row[2:])])
    mat = np.array(values, dtype=float).reshape(len(weeks), len(names))
    t = np.array(target, dtype=float)
    return TimeSeriesFrame(
        weeks,
        {n: mat[:, j].copy() for j, n in enumerate(names)},
        None if np.isnan(t).all() else t,
    )


def summarize(frame: TimeSeriesFrame) -> dict:
    return {
        "weeks": len(frame),
        "first_week": frame.weeks[0].isoformat() if len(frame) else None,
        "last_week": frame.weeks[-1].isoformat() if len(frame) else None,
        "columns": len(frame.columns),
        "missing": {k: int(np.isnan(v).sum()) for k, v in frame.columns.items()},
    }
