"""Synthetic endemic/epidemic case series with known generating models.

Random numbers come from NumPy's legacy ``RandomState`` (MT19937), whose
streams for a given seed are frozen by NumPy's compatibility policy, so a
seed reproduces the same series on every platform.

Daily counts follow the piecewise model: an endemic segment has expected
count ``a`` per day; an epidemic segment has expected count equal to the
one-day increment of the Bernoulli-Verhulst cumulative curve. On the first
day of an epidemic segment the expected count is ``N_base + N0 - C``, where
``C`` is the cumulative count so far and ``N_base = max(C - N(-1), 0)``; for
a segment that follows earlier cases this is the ordinary increment
``N(0) - N(-1)``, and for a series that opens with an epidemic the first day
carries the initial ``N0`` cases.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParametersError, InvalidSpecError
from .ingest import CaseSeries
from .phenomodel import (
    Breakpoint,
    EndemicSegment,
    EpidemicSegment,
    PhaseModel,
    bv_daily_rate,
    bv_log_n,
)

NOISE_MODELS = ("poisson", "gaussian", "none")
MIN_DAYS = 14


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    days: int
    a: float = 0.0
    N0: float = 0.0
    N_inf: float = 0.0
    chi: float = 0.0
    theta: float = 1.0
    noise: str = "poisson"
    noise_scale: float = 0.01

    def check(self) -> None:
        if self.kind not in ("endemic", "epidemic"):
            raise InvalidSpecError(f"unknown segment kind {self.kind!r}")
        if self.days < MIN_DAYS:
            raise InvalidSpecError(f"segments must last at least {MIN_DAYS} days")
        if self.noise not in NOISE_MODELS:
            raise InvalidSpecError(f"unknown noise model {self.noise!r}")
        if self.noise == "gaussian" and not self.noise_scale >= 0:
            raise InvalidSpecError("noise_scale must be >= 0")
        if self.kind == "endemic" and not self.a >= 0:
            raise InvalidSpecError("endemic level a must be >= 0")
        if self.kind == "epidemic" and not (
            0 < self.N0 < self.N_inf and self.chi > 0 and self.theta > 0
        ):
            raise InvalidSpecError("epidemic segment needs 0 < N0 < N_inf, chi > 0, theta > 0")

    def to_json(self) -> dict:
        keys = ("a",) if self.kind == "endemic" else ("N0", "N_inf", "chi", "theta")
        out = {"kind": self.kind, "days": self.days}
        out.update({k: getattr(self, k) for k in keys})
        out["noise"] = self.noise
        if self.noise == "gaussian":
            out["noise_scale"] = self.noise_scale
        return out


@dataclass(frozen=True)
class SynthSpec:
    segments: tuple[SegmentSpec, ...]
    seed: int = 0
    start_date: dt.date = dt.date(2020, 1, 1)
    label: str = "synthetic"

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "start_date": self.start_date.isoformat(),
            "label": self.label,
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SynthSpec":
        try:
            segs = tuple(SegmentSpec(**s) for s in data["segments"])
            start = dt.date.fromisoformat(data.get("start_date", "2020-01-01"))
            return cls(segs, int(data.get("seed", 0)), start, data.get("label", "synthetic"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpecError(f"malformed synthetic spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "SynthSpec":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InvalidSpecError(f"{path}: {exc}") from None
        return cls.from_json(data)


@dataclass
class SynthResult:
    series: CaseSeries
    truth: PhaseModel
    expected: np.ndarray = field(repr=False)

    @property
    def onsets(self) -> list[dt.date]:
        return [s.t0 for s in self.truth.segments if s.kind == "epidemic"]

    def breakpoints(self) -> list[Breakpoint]:
        return [Breakpoint(s.t0, s.kind) for s in self.truth.segments]


def _draw(rng, lam: np.ndarray, seg: SegmentSpec) -> np.ndarray:
    lam = np.maximum(lam, 0.0)
    if seg.noise == "none":
        return lam.copy()
    if seg.noise == "poisson":
        return rng.poisson(lam).astype(np.float64)
    return np.maximum(lam * (1.0 + seg.noise_scale * rng.standard_normal(len(lam))), 0.0)


def generate(spec: SynthSpec) -> SynthResult:
    """Simulate daily counts for ``spec`` and return them with the generating model."""
    if not spec.segments:
        raise InvalidSpecError("a synthetic spec needs at least one segment")
    for seg in spec.segments:
        seg.check()
    rng = np.random.RandomState(spec.seed)
    total = sum(s.days for s in spec.segments)
    last_day = spec.start_date + dt.timedelta(days=total - 1)

    counts, expected, truth = [], [], []
    cum = 0.0
    day0 = 0
    for i, seg in enumerate(spec.segments):
        t0 = spec.start_date + dt.timedelta(days=day0)
        t1 = last_day if i == len(spec.segments) - 1 else t0 + dt.timedelta(days=seg.days)
        if seg.kind == "endemic":
            lam = np.full(seg.days, float(seg.a))
            model = EndemicSegment(t0, t1, cum + seg.a, float(seg.a))
        else:
            n_prev = math.exp(float(bv_log_n(-1.0, seg.N0, seg.N_inf, seg.chi, seg.theta)))
            n_base = max(cum - n_prev, 0.0)
            n = np.exp(bv_log_n(np.arange(-1.0, seg.days), seg.N0, seg.N_inf, seg.chi, seg.theta))
            lam = np.diff(n)
            lam[0] = n_base + seg.N0 - cum
            try:
                model = EpidemicSegment(t0, t1, n_base, seg.N0, seg.N_inf, seg.chi, seg.theta)
            except InvalidParametersError as exc:
                raise InvalidSpecError(str(exc)) from None
        x = _draw(rng, lam, seg)
        counts.append(x)
        expected.append(lam)
        truth.append(model)
        cum += float(x.sum())
        day0 += seg.days

    values = np.concatenate(counts)
    series = CaseSeries(spec.start_date, values, spec.label)
    return SynthResult(series, PhaseModel(truth, spec.label), np.concatenate(expected))


def decay_day(n0, n_inf, chi, theta, level, horizon: int = 2000) -> int:
    """First day after the peak on which the expected daily count drops to ``level``."""
    tau = np.arange(horizon, dtype=np.float64)
    rate = bv_daily_rate(tau, n0, n_inf, chi, theta)
    peak = int(np.argmax(rate))
    below = np.flatnonzero(rate[peak:] <= level)
    return peak + int(below[0]) if len(below) else horizon


def multiwave_spec(seed: int, n_waves: int | None = None, noise: str = "poisson") -> SynthSpec:
    """A random endemic/epidemic alternation with 2-4 waves.

    Each wave starts from the preceding endemic level (its initial daily
    rate matches the endemic mean) and ends once its daily rate has fallen
    back to the level of the next endemic stretch.
    """
    rng = np.random.RandomState(seed)
    if n_waves is None:
        n_waves = int(rng.randint(2, 5))
    segs = []
    a = float(rng.uniform(50, 300))
    for _ in range(n_waves):
        segs.append(SegmentSpec("endemic", int(rng.randint(60, 121)), a=a, noise=noise))
        chi = float(rng.uniform(0.08, 0.2))
        theta = float(rng.uniform(0.5, 2.0))
        n0 = a / chi
        n_inf = n0 * float(rng.uniform(30, 300))
        a = float(rng.uniform(50, 300))
        days = max(decay_day(n0, n_inf, chi, theta, a), MIN_DAYS)
        segs.append(SegmentSpec("epidemic", days, N0=n0, N_inf=n_inf, chi=chi, theta=theta, noise=noise))
    segs.append(SegmentSpec("endemic", int(rng.randint(60, 121)), a=a, noise=noise))
    return SynthSpec(tuple(segs), seed, label=f"multiwave-{seed}")
