"""Shape indicators of the trailing 14-day empirical distribution.

For each day t the window ``N_t = (N(t-13), ..., N(t))`` is summarised by
its coefficient of variation, skewness, raw kurtosis and an entropy
(approximate entropy by default, histogram Shannon entropy optionally).
All moments are population moments (divisor = window length).
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .errors import (
    InputError,
    InvalidHistogramError,
    NonFiniteInputError,
    SeriesTooShortError,
    WindowTooShortError,
    WrongWindowLengthError,
    ZeroVarianceError,
)
from .ingest import CaseSeries, format_number

WINDOW = 14
ENTROPY_MODES = ("apen", "shannon")
INDICATOR_NAMES = ("cv", "skew", "kurt", "entropy")


@dataclass(frozen=True)
class WindowStats:
    mean: float
    std: float
    cv: float
    skew: float
    kurt: float
    entropy: float = math.nan
    valid: bool = True


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        p = np.asarray(self.probabilities, dtype=np.float64)
        if len(edges) != len(p) + 1:
            raise InvalidHistogramError("need one more edge than bins")
        if np.any(np.diff(edges) < 0):
            raise InvalidHistogramError("bin edges must be ordered")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise InvalidHistogramError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvalidHistogramError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True)
class IndicatorSeries:
    """One row per day from ``start_date``; arrays share the same length."""

    start_date: dt.date
    mean: np.ndarray
    std: np.ndarray
    cv: np.ndarray
    skew: np.ndarray
    kurt: np.ndarray
    entropy: np.ndarray
    valid: np.ndarray
    window: int = WINDOW
    entropy_mode: str = "apen"
    label: str = ""

    def __len__(self) -> int:
        return len(self.mean)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self))]

    def matrix(self) -> np.ndarray:
        """The ``(rows, 4)`` matrix of (cv, skew, kurt, entropy)."""
        return np.column_stack([self.cv, self.skew, self.kurt, self.entropy])

    def row(self, i: int) -> WindowStats:
        return WindowStats(
            float(self.mean[i]), float(self.std[i]), float(self.cv[i]),
            float(self.skew[i]), float(self.kurt[i]), float(self.entropy[i]),
            bool(self.valid[i]),
        )

    def with_columns(self, **columns) -> "IndicatorSeries":
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields.update(columns)
        return IndicatorSeries(**fields)


def _check_window(w, window: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or len(w) != window:
        raise WrongWindowLengthError(f"expected a window of {window} values, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NonFiniteInputError("window contains non-finite values")
    return w


def _cv(mean, std, valid):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(std == 0.0, 0.0, np.where(valid, std / mean, np.nan))


def window_moments(w, window: int = WINDOW) -> WindowStats:
    """Mean, standard deviation, CV, skewness and raw kurtosis of one window.

    A flat window (zero standard deviation) has CV 0 and NaN skewness and
    kurtosis; it and any window with non-positive mean are flagged invalid.
    The entropy field is left as NaN.
    """
    w = _check_window(w, window)
    mean, std, skew, kurt = (float(a[0]) for a in kernels.rolling_moments(w, window))
    valid = std > 0.0 and mean > 0.0
    cv = 0.0 if std == 0.0 else (std / mean if mean > 0.0 else math.nan)
    return WindowStats(mean, std, cv, skew, kurt, math.nan, valid)


def skewness_identity_check(w, window: int = WINDOW) -> float:
    """Residual between the standardized third moment and its raw-moment form.

    Compares ``E((N-mu)/sigma)^3`` with ``(E(N^3) - 3 mu sigma^2 - mu^3) / sigma^3``;
    should be round-off sized for well-scaled inputs.
    """
    w = _check_window(w, window)
    stats = window_moments(w, window)
    if stats.std == 0.0:
        raise ZeroVarianceError("skewness identity needs a window with sigma > 0")
    mu, sigma = stats.mean, stats.std
    raw3 = math.fsum(v**3 for v in w) / len(w)
    rhs = (raw3 - 3 * mu * sigma**2 - mu**3) / sigma**3
    return abs(stats.skew - rhs)


def histogram(w, bins: int = 5) -> Histogram:
    """Equal-width histogram of ``w`` over ``[min, max]`` as probabilities."""
    w = np.asarray(w, dtype=np.float64)
    if bins < 1:
        raise InputError("bins must be >= 1")
    if len(w) == 0 or not np.all(np.isfinite(w)):
        raise NonFiniteInputError("histogram needs finite, non-empty data")
    counts = kernels.bin_counts(w, bins)
    lo, hi = float(w.min()), float(w.max())
    edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.full(bins + 1, lo)
    return Histogram(edges, counts / len(w))


def shannon_entropy(h: Histogram) -> float:
    """``-sum p log p`` over non-empty bins, in nats."""
    if not isinstance(h, Histogram):
        raise InvalidHistogramError("expected a Histogram")
    p = h.probabilities[h.probabilities > 0]
    return 0.0 - float((p * np.log(p)).sum())


def approx_entropy(w, m: int = 2, r: float | None = None, r_factor: float = 0.2) -> float:
    """Pincus approximate entropy ``Phi^m(r) - Phi^(m+1)(r)``.

    Templates are compared with the Chebyshev distance and self-matches are
    counted. ``r`` defaults to ``r_factor`` times the population standard
    deviation of ``w``; a flat sequence has ApEn 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if m < 1:
        raise InputError("m must be >= 1")
    if w.ndim != 1 or len(w) < m + 1:
        raise WindowTooShortError(f"approximate entropy with m={m} needs at least {m + 1} values")
    if not np.all(np.isfinite(w)):
        raise NonFiniteInputError("window contains non-finite values")
    if r is None:
        sd = float(w.std())
        if sd == 0.0:
            return 0.0
        r = r_factor * sd
    if r <= 0:
        if w.std() == 0.0:
            return 0.0
        raise InputError("tolerance r must be positive")
    return float(kernels.apen(w, m, r))


def indicator_series(
    s: CaseSeries,
    window: int = WINDOW,
    *,
    entropy: str = "apen",
    m: int = 2,
    r_factor: float = 0.2,
    bins: int = 5,
) -> IndicatorSeries:
    """Indicators for every day with a full trailing window.

    Row ``i`` describes ``s.values[i : i + window]`` and is dated
    ``s.start_date + (window - 1 + i)`` days.
    """
    if entropy not in ENTROPY_MODES:
        raise InputError(f"unknown entropy mode {entropy!r}")
    if window < 2:
        raise InputError("window must be >= 2")
    if len(s) < window:
        raise SeriesTooShortError(len(s), window)
    x = s.values
    mean, std, skew, kurt = kernels.rolling_moments(x, window)
    valid = (std > 0.0) & (mean > 0.0)
    cv = _cv(mean, std, valid)
    skew = np.where(valid, skew, np.nan)
    kurt = np.where(valid, kurt, np.nan)
    if entropy == "apen":
        ent = kernels.rolling_apen(x, window, m, r_factor)
    else:
        ent = kernels.rolling_shannon(x, window, bins)
    start = s.start_date + dt.timedelta(days=window - 1)
    return IndicatorSeries(
        start, mean, std, cv, skew, kurt, ent, valid, window, entropy, s.label
    )


CSV_COLUMNS = ("date", "mean", "std", "cv", "skew", "kurt", "entropy", "valid")


def write_indicator_csv(ind: IndicatorSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i, day in enumerate(ind.dates()):
            writer.writerow(
                [day.isoformat()]
                + [format_number(getattr(ind, c)[i]) for c in CSV_COLUMNS[1:7]]
                + [int(bool(ind.valid[i]))]
            )


def read_indicator_csv(path, window: int = WINDOW, entropy_mode: str = "apen") -> IndicatorSeries:
    cols: dict[str, list[float]] = {c: [] for c in CSV_COLUMNS[1:]}
    dates = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            dates.append(dt.date.fromisoformat(row["date"]))
            for c in CSV_COLUMNS[1:7]:
                cols[c].append(float(row[c]) if row[c] != "" else math.nan)
            cols["valid"].append(row["valid"].strip() in ("1", "true", "True"))
    if not dates:
        raise InputError(f"{path}: no indicator rows")
    if any((b - a).days != 1 for a, b in zip(dates, dates[1:])):
        raise InputError(f"{path}: indicator dates must be consecutive days")
    arrays = {c: np.array(v, dtype=np.float64) for c, v in cols.items() if c != "valid"}
    return IndicatorSeries(
        dates[0], valid=np.array(cols["valid"], dtype=bool), window=window,
        entropy_mode=entropy_mode, label=Path(path).stem, **arrays,
    )
