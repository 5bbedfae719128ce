"""Threshold rule on C1(t) and retro-prediction scoring against known onsets.

An event is a complete excursion of the score: it rises above the
threshold from below and later falls back below it. The fall arms a
forecast of an epidemic onset ``lead_days`` later. A gap (NaN) in the
score cancels any excursion in progress.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyScoreError
from .ingest import format_number
from .pca import ScoreSeries

FLAG_UP = 1
FLAG_DOWN = 2
FLAG_ONSET = 4


@dataclass(frozen=True)
class DetectionRule:
    threshold: float = 1.0
    lead_days: int = 7
    match_tolerance_days: int = 14

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise ConfigError("threshold must be finite")
        if self.lead_days < 0 or self.match_tolerance_days < 0:
            raise ConfigError("lead_days and match_tolerance_days must be >= 0")


@dataclass(frozen=True)
class Event:
    up_crossing_date: dt.date
    down_crossing_date: dt.date
    predicted_onset_date: dt.date

    def to_json(self) -> dict:
        return {
            "up_crossing_date": self.up_crossing_date.isoformat(),
            "down_crossing_date": self.down_crossing_date.isoformat(),
            "predicted_onset_date": self.predicted_onset_date.isoformat(),
        }


@dataclass
class EventScan:
    events: list[Event]
    armed: dt.date | None = None  # up-crossing still open at the end of the score


@dataclass(frozen=True)
class Match:
    event: int
    reference: int
    lag_days: int  # predicted minus reference


@dataclass
class DetectionReport:
    events: list[Event]
    reference_onsets: list[dt.date]
    matched: list[Match]
    performance_ratio: float
    rule: DetectionRule = field(default_factory=DetectionRule)
    armed: dt.date | None = None

    @property
    def false_alarms(self) -> int:
        return len(self.events) - len(self.matched)

    def to_json(self) -> dict:
        ratio = self.performance_ratio
        return {
            "rule": {
                "threshold": self.rule.threshold,
                "lead_days": self.rule.lead_days,
                "match_tolerance_days": self.rule.match_tolerance_days,
            },
            "events": [e.to_json() for e in self.events],
            "armed": None if self.armed is None else self.armed.isoformat(),
            "reference_onsets": [d.isoformat() for d in self.reference_onsets],
            "matched": [
                {
                    "event": m.event,
                    "reference": m.reference,
                    "predicted_onset_date": self.events[m.event].predicted_onset_date.isoformat(),
                    "reference_onset_date": self.reference_onsets[m.reference].isoformat(),
                    "lag_days": m.lag_days,
                }
                for m in self.matched
            ],
            "n_matched": len(self.matched),
            "n_references": len(self.reference_onsets),
            "false_alarms": self.false_alarms,
            "performance_ratio": None if math.isnan(ratio) else ratio,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def threshold_events(score: ScoreSeries, rule: DetectionRule = DetectionRule()) -> EventScan:
    """Scan the score for complete excursions above ``rule.threshold``."""
    values = np.asarray(score.values, dtype=np.float64)
    if len(values) == 0:
        raise EmptyScoreError("score series is empty")
    thr = rule.threshold
    lead = dt.timedelta(days=rule.lead_days)
    events = []
    below_seen = False
    up = None
    for i, v in enumerate(values):
        if math.isnan(v):
            below_seen, up = False, None
            continue
        if v > thr:
            if up is None and below_seen:
                up = i
            below_seen = False
        else:
            if up is not None:
                up_date = score.start_date + dt.timedelta(days=up)
                down_date = score.start_date + dt.timedelta(days=i)
                events.append(Event(up_date, down_date, down_date + lead))
                up = None
            below_seen = True
    armed = None if up is None else score.start_date + dt.timedelta(days=up)
    return EventScan(events, armed)


def score_performance(
    events,
    reference_onsets,
    rule: DetectionRule = DetectionRule(),
) -> DetectionReport:
    """Greedy chronological matching of predicted onsets to reference onsets.

    Each predicted onset, earliest first, takes the nearest still-unmatched
    reference within ``rule.match_tolerance_days`` (ties go to the earlier
    reference). The ratio counts matched references over all references;
    unmatched events are false alarms and do not enter it.
    """
    armed = None
    if isinstance(events, EventScan):
        armed = events.armed
        events = events.events
    events = list(events)
    refs = list(reference_onsets)
    tol = rule.match_tolerance_days
    order = sorted(range(len(events)), key=lambda k: (events[k].predicted_onset_date, k))
    taken = [False] * len(refs)
    matches = []
    for k in order:
        pred = events[k].predicted_onset_date
        best = None
        for j, ref in enumerate(refs):
            if taken[j]:
                continue
            gap = abs((pred - ref).days)
            if gap <= tol and (best is None or gap < best[0] or (gap == best[0] and ref < refs[best[1]])):
                best = (gap, j)
        if best is not None:
            taken[best[1]] = True
            matches.append(Match(k, best[1], (pred - refs[best[1]]).days))
    ratio = len(matches) / len(refs) if refs else math.nan
    return DetectionReport(events, refs, matches, ratio, rule, armed)


def detect(score: ScoreSeries, reference_onsets=(), rule: DetectionRule = DetectionRule()) -> DetectionReport:
    return score_performance(threshold_events(score, rule), reference_onsets, rule)


def reference_onsets_from_phase_model(pm) -> list[dt.date]:
    """Start dates of the epidemic segments of a phase model."""
    return [seg.t0 for seg in pm.segments if seg.kind == "epidemic"]


def event_flags(score: ScoreSeries, report: DetectionReport) -> np.ndarray:
    """Per-day bit flags: 1 up-crossing, 2 down-crossing, 4 predicted onset."""
    flags = np.zeros(len(score), dtype=np.int64)

    def mark(day, bit):
        i = (day - score.start_date).days
        if 0 <= i < len(flags):
            flags[i] |= bit

    for e in report.events:
        mark(e.up_crossing_date, FLAG_UP)
        mark(e.down_crossing_date, FLAG_DOWN)
        mark(e.predicted_onset_date, FLAG_ONSET)
    return flags


def write_overlay_csv(score: ScoreSeries, report: DetectionReport, path) -> None:
    flags = event_flags(score, report)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "c1", "event_flag"])
        for day, v, f in zip(score.dates(), score.values, flags):
            writer.writerow([day.isoformat(), format_number(v), int(f)])
