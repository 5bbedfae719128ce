"""Standardization, correlation-matrix PCA and the first-component score C1(t)."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DateRangeMismatchError,
    DegenerateColumnError,
    InputError,
    NotSymmetricError,
    NumericalError,
)
from .indicators import INDICATOR_NAMES, IndicatorSeries
from .ingest import format_number

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != stds.shape or np.any(~(stds > 0)):
            raise InputError("standardizer needs matching shapes and positive stds")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds


@dataclass(frozen=True)
class PcaModel:
    loadings: np.ndarray
    explained: np.ndarray
    standardizer: Standardizer
    eigenvalues: np.ndarray | None = None
    names: tuple[str, ...] = INDICATOR_NAMES

    @property
    def pc1(self) -> np.ndarray:
        return self.loadings[:, 0]

    def project(self, z) -> np.ndarray:
        """Scores of already-standardized rows on every component."""
        return np.asarray(z, dtype=np.float64) @ self.loadings

    def to_json(self) -> dict:
        return {
            "names": list(self.names),
            "means": self.standardizer.means.tolist(),
            "stds": self.standardizer.stds.tolist(),
            "loadings": self.loadings.tolist(),
            "explained": self.explained.tolist(),
            "eigenvalues": None if self.eigenvalues is None else self.eigenvalues.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "PcaModel":
        try:
            loadings = np.array(data["loadings"], dtype=np.float64)
            std = Standardizer(np.array(data["means"]), np.array(data["stds"]))
            explained = np.array(data["explained"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed PCA model: {exc}") from None
        k = len(std.means)
        if loadings.shape != (k, k) or explained.shape != (k,):
            raise ConfigError("PCA model dimensions do not agree")
        eig = data.get("eigenvalues")
        return cls(
            loadings, explained, std,
            None if eig is None else np.array(eig, dtype=np.float64),
            tuple(data.get("names", INDICATOR_NAMES)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PcaModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ScoreSeries:
    """C1(t) aligned with indicator rows; NaN marks a gap."""

    start_date: dt.date
    values: np.ndarray
    label: str = ""

    def __len__(self) -> int:
        return len(self.values)

    def dates(self) -> list[dt.date]:
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]

    def shifted(self, days: int) -> "ScoreSeries":
        return ScoreSeries(self.start_date + dt.timedelta(days=days), self.values, self.label)


def _fit_mask(ind: IndicatorSeries, mask=None) -> np.ndarray:
    X = ind.matrix()
    rows = np.asarray(ind.valid, dtype=bool) & np.all(np.isfinite(X), axis=1)
    if mask is not None:
        rows &= np.asarray(mask, dtype=bool)
    return rows


def standardize(ind: IndicatorSeries, mask=None) -> tuple[np.ndarray, Standardizer]:
    """Z-score the four indicator columns over the valid rows.

    Uses the population standard deviation. Rows that are invalid (or
    excluded by ``mask``) come back as NaN and take no part in the fit.
    """
    X = ind.matrix()
    rows = _fit_mask(ind, mask)
    if rows.sum() < 2:
        raise InputError("standardization needs at least 2 valid rows")
    fit = X[rows]
    means = fit.mean(axis=0)
    stds = fit.std(axis=0)
    for name, mu, sd in zip(INDICATOR_NAMES, means, stds):
        if not sd > 1e-12 * max(1.0, abs(mu)):
            raise DegenerateColumnError(name)
    std = Standardizer(means, stds)
    Z = np.full_like(X, np.nan)
    Z[rows] = std.apply(fit)
    return Z, std


def eigen_sym(M, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted in descending order and the matching
    orthonormal eigenvectors as columns. Sweeps stop once every off-diagonal
    entry is below ``tol`` (relative to the matrix scale).
    """
    A = np.array(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotSymmetricError("matrix has non-finite entries")
    scale = max(float(np.abs(A).max()), 1e-300)
    if np.abs(A - A.T).max() > 1e-9 * max(scale, 1.0):
        raise NotSymmetricError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    threshold = tol * scale

    for _ in range(max_sweeps):
        off = np.abs(A - np.diag(np.diag(A))).max() if n > 1 else 0.0
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                # rotate rows/cols p and q
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp = V[:, p].copy()
                V[:, p] = c * Vp - s * V[:, q]
                V[:, q] = s * Vp + c * V[:, q]
    else:
        raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    eigvals = np.diag(A).copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], V[:, order]


def _fix_signs(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for k in range(V.shape[1]):
        col = V[:, k]
        lead = np.flatnonzero(np.abs(col) > 1e-12)
        if len(lead) and col[lead[0]] < 0:
            V[:, k] = -col
    return V


def pca_fit(ind: IndicatorSeries, mask=None) -> PcaModel:
    """PCA of the correlation matrix of the four indicators.

    ``mask`` optionally restricts the rows used for fitting (for instance to
    endemic periods); by default every valid row is used.
    """
    Z, std = standardize(ind, mask)
    rows = np.all(np.isfinite(Z), axis=1)
    if rows.sum() < 5:
        raise InputError("PCA needs at least 5 valid rows")
    Zf = Z[rows]
    corr = Zf.T @ Zf / len(Zf)
    corr = 0.5 * (corr + corr.T)
    eigvals, V = eigen_sym(corr)
    V = _fix_signs(V)
    clipped = np.clip(eigvals, 0.0, None)
    explained = 100.0 * clipped / clipped.sum()
    return PcaModel(V, explained, std, eigvals)


def score_pc1(
    model: PcaModel,
    ind: IndicatorSeries,
    start: dt.date | None = None,
    end: dt.date | None = None,
) -> ScoreSeries:
    """C1(t): first-component loadings dotted with the standardized indicators.

    Invalid rows become NaN gaps. ``start``/``end`` (inclusive) select a
    sub-range, which must lie inside the indicator dates.
    """
    lo, hi = 0, len(ind) - 1
    if start is not None:
        lo = (start - ind.start_date).days
    if end is not None:
        hi = (end - ind.start_date).days
    if lo < 0 or hi >= len(ind) or lo > hi:
        raise DateRangeMismatchError(
            f"requested range is outside indicator dates "
            f"{ind.start_date} .. {ind.start_date + dt.timedelta(days=len(ind) - 1)}"
        )
    X = ind.matrix()[lo : hi + 1]
    ok = np.asarray(ind.valid[lo : hi + 1], dtype=bool) & np.all(np.isfinite(X), axis=1)
    values = np.full(len(X), np.nan)
    values[ok] = model.standardizer.apply(X[ok]) @ model.pc1
    return ScoreSeries(ind.start_date + dt.timedelta(days=lo), values, ind.label)


def write_score_csv(score: ScoreSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "c1"])
        for day, v in zip(score.dates(), score.values):
            writer.writerow([day.isoformat(), format_number(v)])


def read_score_csv(path) -> ScoreSeries:
    dates, values = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or []) < {"date", "c1"}:
            raise InputError(f"{path}: expected columns date,c1")
        for row in reader:
            dates.append(dt.date.fromisoformat(row["date"]))
            values.append(float(row["c1"]) if row["c1"].strip() else math.nan)
    if not dates:
        raise InputError(f"{path}: empty score file")
    if any((b - a).days != 1 for a, b in zip(dates, dates[1:])):
        raise InputError(f"{path}: score dates must be consecutive days")
    return ScoreSeries(dates[0], np.array(values), Path(path).stem)
