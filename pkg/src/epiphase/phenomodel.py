"""Piecewise endemic / Bernoulli-Verhulst models of cumulative case counts.

Endemic segments are straight lines ``CR(t) = N0 + a (t - t0)``. Epidemic
segments follow the closed-form solution of

    N'(t) = chi N(t) [1 - (N(t) / N_inf)^theta],   N(t0) = N0,

shifted by a baseline, ``CR(t) = N_base + N(t)``. Fits are least squares on
cumulative data; the epidemic fitter is a damped Gauss-Newton
(Levenberg-Marquardt) iteration with an analytic Jacobian, run from a small
fixed set of starting points.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    InvalidDataError,
    InvalidParametersError,
    NoConvergenceError,
    OutOfSegmentError,
    SegmentFitError,
    TooFewPointsError,
)
from .ingest import CumulativeSeries, format_number

log = logging.getLogger(__name__)

PHASES = ("endemic", "epidemic")
MAX_ITER = 500
SSR_RTOL = 1e-10
# (theta, N_inf multiplier on the segment's rise) for each start
MULTI_START = ((1.0, 1.0), (1.0, 1.5), (0.5, 1.5), (2.0, 1.5), (2.0, 1.0))


@dataclass(frozen=True)
class EndemicSegment:
    t0: dt.date
    t1: dt.date
    N0: float
    a: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise InvalidParametersError("endemic segment needs t1 > t0")
        if not (math.isfinite(self.N0) and math.isfinite(self.a)) or self.a < 0:
            raise InvalidParametersError("endemic segment needs finite N0 and a >= 0")

    kind = "endemic"

    def cumulative(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        return self.N0 + self.a * tau

    def params(self) -> dict:
        return {"N0": self.N0, "a": self.a}


@dataclass(frozen=True)
class EpidemicSegment:
    t0: dt.date
    t1: dt.date
    N_base: float
    N0: float
    N_inf: float
    chi: float
    theta: float

    kind = "epidemic"

    def __post_init__(self):
        vals = (self.N_base, self.N0, self.N_inf, self.chi, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidParametersError("epidemic parameters must be finite")
        if not (self.N_base >= 0 and 0 < self.N0 < self.N_inf and self.chi > 0 and self.theta > 0):
            raise InvalidParametersError(
                "epidemic segment needs N_base >= 0, 0 < N0 < N_inf, chi > 0, theta > 0"
            )
        if not self.t1 > self.t0:
            raise InvalidParametersError("epidemic segment needs t1 > t0")

    def cumulative(self, tau):
        return self.N_base + np.exp(
            bv_log_n(tau, self.N0, self.N_inf, self.chi, self.theta)
        )

    def params(self) -> dict:
        return {
            "N_base": self.N_base, "N0": self.N0, "N_inf": self.N_inf,
            "chi": self.chi, "theta": self.theta,
        }


Segment = EndemicSegment | EpidemicSegment


def _offset(seg, t) -> float:
    if isinstance(t, dt.date):
        return float((t - seg.t0).days)
    return float(t)


# -- closed form --------------------------------------------------------------


def _log_s(tau, q, chi, theta):
    """``log(1 + q (exp(chi theta tau) - 1))`` without overflow, for 0 < q < 1."""
    return np.logaddexp(math.log1p(-q), math.log(q) + chi * theta * tau)


def bv_log_n(tau, n0, n_inf, chi, theta):
    """Log of the Bernoulli-Verhulst solution ``N(t0 + tau)`` with ``N(t0) = n0``.

    Past the inflection the growth form cancels two large terms, so there
    ``ln N_inf - log1p(((1 - q) / q) exp(-chi theta tau)) / theta`` is used.
    """
    tau = np.asarray(tau, dtype=np.float64)
    ln_q = theta * math.log(n0 / n_inf)
    q = math.exp(ln_q)
    x = chi * theta * tau
    ln_odds = math.log1p(-q) - ln_q  # ln((1 - q) / q)
    late = x > ln_odds
    with np.errstate(over="ignore"):
        early_val = math.log(n0) + chi * tau - np.log1p(q * np.expm1(np.where(late, 0.0, x))) / theta
    late_val = math.log(n_inf) - np.log1p(np.exp(ln_odds - np.where(late, x, ln_odds))) / theta
    return np.where(late, late_val, early_val)


def bv_curve(tau, n_base, n0, n_inf, chi, theta):
    """Cumulative cases ``N_base + N(t0 + tau)``."""
    return n_base + np.exp(bv_log_n(tau, n0, n_inf, chi, theta))


def bv_daily_rate(tau, n0, n_inf, chi, theta):
    """Analytic ``N'(t0 + tau)``, written as ``chi N (1 - q) / S`` to stay accurate near saturation."""
    tau = np.asarray(tau, dtype=np.float64)
    q = (n0 / n_inf) ** theta
    log_s = _log_s(tau, q, chi, theta)
    return chi * np.exp(bv_log_n(tau, n0, n_inf, chi, theta) + math.log1p(-q) - log_s)


def endemic_eval(seg: EndemicSegment, t) -> float:
    """Cumulative cases of an endemic segment at date ``t`` (or day offset)."""
    tau = _offset(seg, t)
    if tau < 0 or tau > (seg.t1 - seg.t0).days:
        raise OutOfSegmentError(f"t is outside [{seg.t0}, {seg.t1}]")
    return float(seg.N0 + tau * seg.a)


def epidemic_eval(seg: EpidemicSegment, t) -> float:
    """Cumulative cases of an epidemic segment at date ``t`` (or day offset, t >= t0)."""
    if not isinstance(seg, EpidemicSegment):
        raise InvalidParametersError("expected an EpidemicSegment")
    tau = _offset(seg, t)
    if tau < 0:
        raise OutOfSegmentError("epidemic model is evaluated for t >= t0 only")
    return float(seg.cumulative(tau))


def bv_rhs(seg: EpidemicSegment, N: float) -> float:
    """Right-hand side ``chi N [1 - (N / N_inf)^theta]`` for ``N = CR - N_base``."""
    if not isinstance(seg, EpidemicSegment):
        raise InvalidParametersError("expected an EpidemicSegment")
    ratio = N / seg.N_inf
    if ratio > 0:
        # -expm1 keeps digits when (N / N_inf)^theta is close to 1
        factor = -math.expm1(seg.theta * math.log(ratio))
    else:
        factor = 1.0 - math.copysign(abs(ratio) ** seg.theta, ratio) if ratio else 1.0
    return seg.chi * N * factor


# -- fitting --------------------------------------------------------------------


@dataclass
class FitResult:
    segment: Segment
    ssr: float
    converged: bool = True
    iterations: int = 0
    n_points: int = 0
    warnings: list[str] = field(default_factory=list)

    def report(self) -> dict:
        seg = self.segment
        out = {"type": seg.kind, "t0": seg.t0.isoformat(), "t1": seg.t1.isoformat()}
        out.update(seg.params())
        out.update(
            ssr=self.ssr, converged=self.converged, iterations=self.iterations,
            n_points=self.n_points, warnings=list(self.warnings),
        )
        return out


def _segment_data(c: CumulativeSeries, t0: dt.date, t1: dt.date):
    i0 = max((t0 - c.start_date).days, 0)
    i1 = min((t1 - c.start_date).days, len(c) - 1)
    if i1 < i0:
        return np.empty(0), np.empty(0)
    idx = np.arange(i0, i1 + 1)
    tau = (idx - (t0 - c.start_date).days).astype(np.float64)
    return tau, c.values[i0 : i1 + 1].astype(np.float64)


def fit_endemic(c: CumulativeSeries, t0: dt.date, t1: dt.date) -> FitResult:
    """Least-squares line through the cumulative data on ``[t0, t1]``.

    A negative slope is clamped to zero (the intercept then becomes the mean
    level) and a warning is recorded.
    """
    tau, y = _segment_data(c, t0, t1)
    if len(y) < 3:
        raise TooFewPointsError(f"endemic fit needs >= 3 points in [{t0}, {t1}], got {len(y)}")
    A = np.column_stack([np.ones_like(tau), tau])
    (n0, a), *_ = np.linalg.lstsq(A, y, rcond=None)
    warnings = []
    if a < 0:
        msg = f"negative endemic slope {a:.6g} clamped to 0"
        log.warning(msg)
        warnings.append(msg)
        a = 0.0
        n0 = float(y.mean())
    resid = n0 + a * tau - y
    seg = EndemicSegment(t0, t1, float(n0), float(a))
    return FitResult(seg, float(resid @ resid), True, 0, len(y), warnings)


def _unpack(p):
    n_base, ln_n0, ln_gap, ln_chi, ln_theta = (float(v) for v in p)
    n0 = math.exp(ln_n0)
    return n_base, n0, n0 + math.exp(ln_gap), math.exp(ln_chi), math.exp(ln_theta)


def _pack(n_base, n0, n_inf, chi, theta):
    return np.array([n_base, math.log(n0), math.log(n_inf - n0), math.log(chi), math.log(theta)])


def bv_residual_jacobian(tau, p):
    """Model values and the Jacobian w.r.t. the internal parameter vector.

    Internal parameters are ``(N_base, ln N0, ln(N_inf - N0), ln chi, ln theta)``;
    the log/gap form keeps ``0 < N0 < N_inf``, ``chi > 0`` and ``theta > 0``
    without constraints.
    """
    tau = np.asarray(tau, dtype=np.float64)
    n_base, n0, n_inf, chi, theta = _unpack(p)
    q = (n0 / n_inf) ** theta
    ln_q = theta * math.log(n0 / n_inf)
    x = chi * theta * tau
    log_s = np.logaddexp(math.log1p(-q), ln_q + x)
    n = np.exp(bv_log_n(tau, n0, n_inf, chi, theta))
    w = np.exp(ln_q + x - log_s)  # q E / S
    v = w - np.exp(ln_q - log_s)  # q (E - 1) / S

    d_ln_n0 = 1.0 - v  # N_inf held fixed
    d_ln_ninf = v
    d_ln_chi = chi * tau * (1.0 - w)
    d_ln_theta = log_s / theta - (math.log(n0 / n_inf) * v + chi * tau * w)

    gap = n_inf - n0
    J = np.empty((len(tau), 5))
    J[:, 0] = 1.0
    J[:, 1] = n * (d_ln_n0 + d_ln_ninf * n0 / n_inf)
    J[:, 2] = n * d_ln_ninf * gap / n_inf
    J[:, 3] = n * d_ln_chi
    J[:, 4] = n * d_ln_theta
    return n_base + n, J


def _ssr(tau, y, p):
    try:
        model = bv_curve(tau, *_unpack(p))
    except (OverflowError, ValueError, ZeroDivisionError):
        return math.inf
    r = model - y
    val = float(r @ r)
    return val if math.isfinite(val) else math.inf


def levenberg_marquardt(tau, y, p0, max_iter: int = MAX_ITER, rtol: float = SSR_RTOL):
    """Minimise the cumulative-case SSR from internal start ``p0``.

    Returns ``(p, ssr, converged, iterations)``. ``N_base`` is projected onto
    ``N_base >= 0`` after every step.
    """
    p = np.array(p0, dtype=np.float64)
    p[0] = max(p[0], 0.0)
    ssr = _ssr(tau, y, p)
    if not math.isfinite(ssr):
        return p, ssr, False, 0
    lam = 1e-3
    scale_floor = 1e-12 * max(1.0, float(np.abs(y).max()))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        model, J = bv_residual_jacobian(tau, p)
        r = model - y
        if not np.all(np.isfinite(J)):
            break
        dscale = np.sqrt(np.maximum((J * J).sum(axis=0), scale_floor))
        accepted = False
        while lam < 1e16:
            A = np.vstack([J, np.diag(math.sqrt(lam) * dscale)])
            b = np.concatenate([-r, np.zeros(5)])
            step, *_ = np.linalg.lstsq(A, b, rcond=None)
            trial = p + step
            trial[0] = max(trial[0], 0.0)
            trial_ssr = _ssr(tau, y, trial)
            if trial_ssr < ssr:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at any damping: a stationary point
            converged = True
            break
        improvement = (ssr - trial_ssr) / ssr if ssr > 0 else 0.0
        p, ssr = trial, trial_ssr
        lam = max(lam / 10.0, 1e-12)
        if improvement < rtol or ssr <= 1e-28 * float(y @ y):
            converged = True
            break
    return p, ssr, converged, it


def _early_growth_rate(tau, y) -> float:
    d = np.diff(y)
    k = max(5, len(d) // 3)
    d = d[:k]
    t = tau[1 : k + 1]
    if len(d) < 2:
        return 0.05
    slope = np.polyfit(t, np.log(np.maximum(d, 0.0) + 1.0), 1)[0]
    return float(np.clip(slope, 1e-3, 2.0)) if slope > 1e-3 else 0.05


def initial_guesses(tau, y, init=None):
    """Deterministic starting points (physical parameters) for the epidemic fit."""
    y0 = float(y[0])
    rise = max(float(y[-1] - y[0]), 1e-9)
    n0 = 0.01 * rise
    if y0 > 0:
        n0 = min(n0, y0)
    n_base = max(y0 - n0, 0.0)
    chi = _early_growth_rate(tau, y)
    starts = []
    if init is not None:
        starts.append(tuple(float(v) for v in init))
    for theta, factor in MULTI_START:
        n_inf = max(factor * (float(y[-1]) - n_base), 2.0 * n0)
        starts.append((n_base, n0, n_inf, chi, theta))
    return starts


def fit_epidemic(
    c: CumulativeSeries,
    t0: dt.date,
    t1: dt.date,
    init=None,
    *,
    strict: bool = False,
) -> FitResult:
    """Fit a Bernoulli-Verhulst segment to cumulative data on ``[t0, t1]``.

    Parameters
    ----------
    c : CumulativeSeries
    t0, t1 : date
        Inclusive fitting window; ``t0`` is the segment origin.
    init : tuple, optional
        Extra start ``(N_base, N0, N_inf, chi, theta)`` tried before the
        built-in ones.
    strict : bool
        Raise :class:`NoConvergenceError` instead of returning a flagged
        best-so-far result.
    """
    tau, y = _segment_data(c, t0, t1)
    if len(y) < 8:
        raise TooFewPointsError(f"epidemic fit needs >= 8 points in [{t0}, {t1}], got {len(y)}")
    if np.any(np.diff(y) < 0):
        raise InvalidDataError("epidemic fit needs non-decreasing cumulative data")
    if not y[-1] > y[0]:
        raise InvalidDataError("epidemic fit needs cumulative data that grows")

    best = None
    for start in initial_guesses(tau, y, init):
        try:
            p0 = _pack(*start)
        except ValueError:
            continue
        p, ssr, conv, iters = levenberg_marquardt(tau, y, p0)
        if best is None or ssr < best[1]:
            best = (p, ssr, conv, iters)
    if best is None or not math.isfinite(best[1]):
        raise NoConvergenceError("no starting point gave a finite fit")
    p, ssr, conv, iters = best
    n_base, n0, n_inf, chi, theta = _unpack(p)
    seg = EpidemicSegment(t0, t1, n_base, n0, n_inf, chi, theta)
    result = FitResult(seg, ssr, conv, iters, len(y))
    if not conv:
        result.warnings.append("iteration limit reached before convergence")
        if strict:
            raise NoConvergenceError("epidemic fit did not converge", result)
    return result


# -- piecewise models -------------------------------------------------------------


@dataclass(frozen=True)
class Breakpoint:
    date: dt.date
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got {self.phase!r}")


def load_breakpoints(path) -> list[Breakpoint]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        items = [Breakpoint(dt.date.fromisoformat(d["date"]), d["phase"]) for d in data]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: bad breakpoint file ({exc})") from None
    return items


def save_breakpoints(breakpoints, path) -> None:
    data = [{"date": b.date.isoformat(), "phase": b.phase} for b in breakpoints]
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


@dataclass
class PhaseModel:
    segments: list
    label: str = ""

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if a.t1 != b.t0:
                raise InvalidParametersError(f"segments not contiguous at {a.t1} / {b.t0}")

    def segment_at(self, day: dt.date):
        for i, seg in enumerate(self.segments):
            last = i == len(self.segments) - 1
            if seg.t0 <= day < seg.t1 or (last and day == seg.t1):
                return seg
        return None

    def cumulative(self, day: dt.date) -> float:
        seg = self.segment_at(day)
        if seg is None:
            raise OutOfSegmentError(f"{day} is not covered by the model")
        return float(seg.cumulative((day - seg.t0).days))

    def daily(self, day: dt.date) -> float:
        """Model new cases on ``day``: one-day difference within its segment."""
        seg = self.segment_at(day)
        if seg is None:
            raise OutOfSegmentError(f"{day} is not covered by the model")
        tau = (day - seg.t0).days
        return float(seg.cumulative(tau) - seg.cumulative(tau - 1))

    def join_gaps(self) -> list[float]:
        """Jump of the cumulative model at each interior join."""
        gaps = []
        for a, b in zip(self.segments, self.segments[1:]):
            gaps.append(float(b.cumulative(0.0) - a.cumulative((a.t1 - a.t0).days)))
        return gaps

    def to_json(self) -> dict:
        segs = []
        for seg in self.segments:
            d = {"type": seg.kind, "t0": seg.t0.isoformat(), "t1": seg.t1.isoformat()}
            d.update(seg.params())
            segs.append(d)
        return {"label": self.label, "segments": segs}

    @classmethod
    def from_json(cls, data: dict) -> "PhaseModel":
        segs = []
        for d in data["segments"]:
            t0, t1 = dt.date.fromisoformat(d["t0"]), dt.date.fromisoformat(d["t1"])
            if d["type"] == "endemic":
                segs.append(EndemicSegment(t0, t1, d["N0"], d["a"]))
            elif d["type"] == "epidemic":
                segs.append(EpidemicSegment(t0, t1, d["N_base"], d["N0"], d["N_inf"], d["chi"], d["theta"]))
            else:
                raise ConfigError(f"unknown segment type {d['type']!r}")
        return cls(segs, data.get("label", ""))


@dataclass
class PhaseFit:
    model: PhaseModel
    fits: list
    dates: list
    model_cumulative: np.ndarray
    model_daily: np.ndarray

    @property
    def total_ssr(self) -> float:
        return float(sum(f.ssr for f in self.fits))

    def report(self) -> dict:
        return {
            "label": self.model.label,
            "segments": [f.report() for f in self.fits],
            "total_ssr": self.total_ssr,
            "join_gaps": self.model.join_gaps(),
        }

    def write_curves(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", "model_cumulative", "model_daily"])
            for day, cum, daily in zip(self.dates, self.model_cumulative, self.model_daily):
                writer.writerow([day.isoformat(), format_number(cum), format_number(daily)])


def _spans(c: CumulativeSeries, breakpoints):
    if not breakpoints:
        raise ConfigError("at least one breakpoint is required")
    days = [b.date for b in breakpoints]
    if any(b <= a for a, b in zip(days, days[1:])):
        raise ConfigError("breakpoints must be strictly increasing")
    if days[-1] >= c.end_date or (len(days) > 1 and days[1] <= c.start_date):
        raise ConfigError(f"breakpoints must lie within {c.start_date} .. {c.end_date}")
    if days[0] < c.start_date:
        # smoothing trims the head of the data; the first segment starts with it
        breakpoints = [Breakpoint(c.start_date, breakpoints[0].phase)] + list(breakpoints[1:])
    spans = []
    for i, bp in enumerate(breakpoints):
        last = i == len(breakpoints) - 1
        t1 = c.end_date if last else breakpoints[i + 1].date
        fit_end = t1 if last else t1 - dt.timedelta(days=1)
        spans.append((bp.phase, bp.date, t1, fit_end))
    return spans


def _fit_span(c, phase, t0, t1, fit_end):
    if phase == "endemic":
        res = fit_endemic(c, t0, fit_end)
        seg = res.segment
        res.segment = EndemicSegment(t0, t1, seg.N0, seg.a)
    else:
        res = fit_epidemic(c, t0, fit_end)
        s = res.segment
        res.segment = EpidemicSegment(t0, t1, s.N_base, s.N0, s.N_inf, s.chi, s.theta)
    return res


def assemble_phase_model(c: CumulativeSeries, breakpoints, label: str | None = None) -> PhaseFit:
    """Fit each tagged span and join them into a piecewise model.

    Breakpoint ``i`` starts a segment that runs until breakpoint ``i + 1``
    (exclusive) or the end of the data. The returned fit carries the model
    cumulative curve and its one-day differences over the covered dates.
    """
    fits = []
    for i, (phase, t0, t1, fit_end) in enumerate(_spans(c, breakpoints)):
        try:
            fits.append(_fit_span(c, phase, t0, t1, fit_end))
        except (TooFewPointsError, InvalidDataError, NoConvergenceError, InvalidParametersError) as exc:
            raise SegmentFitError(i, exc) from exc
    model = PhaseModel([f.segment for f in fits], c.label if label is None else label)

    first = model.segments[0].t0
    dates = [first + dt.timedelta(days=k) for k in range((c.end_date - first).days + 1)]
    cum = np.array([model.cumulative(d) for d in dates])
    daily = np.array([model.daily(d) for d in dates])
    return PhaseFit(model, fits, dates, cum, daily)


def refine_breakpoints(c: CumulativeSeries, breakpoints, radius: int = 5) -> list[Breakpoint]:
    """Shift each interior breakpoint by up to ``radius`` days to lower the total SSR.

    Breakpoints are visited in order; each move only re-fits the two
    segments that share it.
    """
    bps = list(breakpoints)
    for i in range(1, len(bps)):
        best_shift, best_ssr = 0, math.inf
        for shift in range(-radius, radius + 1):
            trial = list(bps)
            trial[i] = Breakpoint(bps[i].date + dt.timedelta(days=shift), bps[i].phase)
            try:
                spans = _spans(c, trial)
                ssr = sum(_fit_span(c, *spans[j]).ssr for j in (i - 1, i))
            except (ConfigError, TooFewPointsError, InvalidDataError, NoConvergenceError, InvalidParametersError):
                continue
            if ssr < best_ssr:
                best_shift, best_ssr = shift, ssr
        bps[i] = Breakpoint(bps[i].date + dt.timedelta(days=best_shift), bps[i].phase)
    return bps


def inflection_level(seg: EpidemicSegment) -> float:
    """``N`` at which daily new cases peak: ``N_inf (1 + theta)^(-1/theta)``."""
    return seg.N_inf * (1.0 + seg.theta) ** (-1.0 / seg.theta)


__all__ = [
    "EndemicSegment", "EpidemicSegment", "PhaseModel", "PhaseFit", "FitResult", "Breakpoint",
    "endemic_eval", "epidemic_eval", "bv_rhs", "bv_curve", "bv_log_n", "bv_daily_rate",
    "bv_residual_jacobian", "fit_endemic", "fit_epidemic", "assemble_phase_model",
    "refine_breakpoints", "load_breakpoints", "save_breakpoints", "inflection_level",
]
