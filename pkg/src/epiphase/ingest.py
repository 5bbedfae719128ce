"""Loading, validating and smoothing daily case counts."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptySeriesError, InputError, MalformedRowError, SeriesTooShortError

log = logging.getLogger(__name__)

FILL_POLICIES = ("zero", "ffill")


def _as_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CaseSeries:
    """Gap-free daily new-case counts; ``values[i]`` belongs to ``start_date + i`` days."""

    start_date: dt.date
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = _as_array(self.values)
        if arr.ndim != 1:
            raise InputError("case values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise InputError("case values must be finite")
        if np.any(arr < 0):
            raise InputError("case values must be non-negative")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]

    def index_of(self, day: dt.date) -> int:
        return (day - self.start_date).days


@dataclass(frozen=True)
class CumulativeSeries:
    start_date: dt.date
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = _as_array(self.values)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise InputError("cumulative values must be a finite 1-d sequence")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]

    def is_non_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))


@dataclass
class ParseResult:
    series: CaseSeries
    clamped: int = 0
    filled: list[dt.date] = field(default_factory=list)


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise MalformedRowError(line, f"cannot parse date {text!r}") from None


def _parse_value(text: str, line: int) -> float:
    text = text.strip()
    if text == "":
        raise MalformedRowError(line, "empty value")
    try:
        value = float(text)
    except ValueError:
        raise MalformedRowError(line, f"cannot parse value {text!r}") from None
    if not math.isfinite(value):
        raise MalformedRowError(line, f"non-finite value {text!r}")
    return value


def parse_csv(
    path,
    date_column: str = "date",
    value_column: str = "value",
    *,
    fill: str = "zero",
    where: tuple[str, str] | None = None,
    label: str | None = None,
) -> ParseResult:
    """Read a daily series from a headed CSV file.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row, one row per day.
    date_column, value_column : str
        Header names of the ISO-8601 date and the daily count.
    fill : {"zero", "ffill"}
        How interior missing dates are filled.
    where : (column, value), optional
        Keep only rows whose ``column`` equals ``value``; lets a multi-region
        file (such as the WHO global table) be read one region at a time.
    label : str, optional
        Series label, defaults to the ``where`` value or the file stem.

    Returns
    -------
    ParseResult
        The series, the number of negative values clamped to zero and the
        list of filled dates.
    """
    if fill not in FILL_POLICIES:
        raise InputError(f"unknown fill policy {fill!r}; expected one of {FILL_POLICIES}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))

    rows: dict[dt.date, float] = {}
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [date_column, value_column] + ([where[0]] if where else [])
        for col in needed:
            if col not in header:
                raise MalformedRowError(1, f"missing column {col!r}")
        for line, row in enumerate(reader, start=2):
            if None in row or any(row.get(c) is None for c in needed):
                raise MalformedRowError(line, "wrong number of fields")
            if where and row[where[0]].strip() != where[1]:
                continue
            day = _parse_date(row[date_column], line)
            if day in rows:
                raise MalformedRowError(line, f"duplicate date {day.isoformat()}")
            rows[day] = _parse_value(row[value_column], line)

    if not rows:
        raise EmptySeriesError(f"{path}: no data rows")

    days = sorted(rows)
    start = days[0]
    n = (days[-1] - start).days + 1
    values = np.zeros(n)
    present = np.zeros(n, dtype=bool)
    for day in days:
        i = (day - start).days
        values[i] = rows[day]
        present[i] = True

    filled = [start + dt.timedelta(days=int(i)) for i in np.flatnonzero(~present)]
    if fill == "ffill":
        for i in np.flatnonzero(~present):
            values[i] = values[i - 1]

    negative = values < 0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        log.warning("%s: clamped %d negative values to 0", path, clamped)
        values[negative] = 0.0

    if label is None:
        label = where[1] if where else path.stem
    return ParseResult(CaseSeries(start, values, label), clamped, filled)


def write_csv(series: CaseSeries | CumulativeSeries, path) -> None:
    """Write the canonical ``date,value`` form."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "value"])
        for day, value in zip(series.dates(), series.values):
            writer.writerow([day.isoformat(), format_number(value)])


def format_number(value: float) -> str:
    """Shortest round-tripping text for a float; integers lose the ``.0``."""
    if not math.isfinite(value):
        return ""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def rolling_average(s: CaseSeries, window: int = 14) -> CaseSeries:
    """Trailing mean: output day t averages ``s[t-window+1 .. t]``."""
    if window < 1:
        raise InputError("window must be >= 1")
    if len(s) < window:
        raise SeriesTooShortError(len(s), window)
    x = s.values
    # prefix sums leak drift over long series; sum each window explicitly
    means = np.lib.stride_tricks.sliding_window_view(x, window).mean(axis=1)
    start = s.start_date + dt.timedelta(days=window - 1)
    return CaseSeries(start, means, s.label)


def cumulate(s: CaseSeries) -> CumulativeSeries:
    return CumulativeSeries(s.start_date, np.cumsum(s.values), s.label)
