"""Minimal deterministic SVG line charts for dated series.

Output is plain text with fixed number formatting, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 960, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50
PHASE_COLORS = {"endemic": "#fff3b0", "epidemic": "#cfe3ff"}


@dataclass
class Line:
    dates: list
    values: np.ndarray
    color: str = "black"
    label: str = ""
    width: float = 1.2


@dataclass
class Chart:
    title: str = ""
    ylabel: str = ""
    lines: list = field(default_factory=list)
    hlines: list = field(default_factory=list)  # (y, color)
    bands: list = field(default_factory=list)  # (start date, end date, color)
    markers: list = field(default_factory=list)  # (date, color)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:g}"


def render(chart: Chart) -> str:
    all_dates = [d for ln in chart.lines for d in ln.dates]
    if not all_dates:
        raise ValueError("chart has no data")
    d0, d1 = min(all_dates), max(all_dates)
    span = max((d1 - d0).days, 1)
    finite = [v for ln in chart.lines for v in np.asarray(ln.values, float) if math.isfinite(v)]
    finite += [y for y, _ in chart.hlines]
    ylo, yhi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if yhi <= ylo:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def x(day: dt.date) -> float:
        return MARGIN_L + pw * (day - d0).days / span

    def y(v: float) -> float:
        return MARGIN_T + ph * (1.0 - (v - ylo) / (yhi - ylo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    for start, end, color in chart.bands:
        xa, xb = x(max(start, d0)), x(min(end, d1))
        if xb > xa:
            out.append(
                f'<rect x="{_f(xa)}" y="{MARGIN_T}" width="{_f(xb - xa)}" height="{ph}" fill="{color}"/>'
            )
    for t in _nice_ticks(ylo, yhi):
        out.append(
            f'<line x1="{MARGIN_L}" y1="{_f(y(t))}" x2="{WIDTH - MARGIN_R}" y2="{_f(y(t))}" '
            f'stroke="#e0e0e0" stroke-width="0.5"/>'
        )
        out.append(
            f'<text x="{MARGIN_L - 6}" y="{_f(y(t) + 4)}" text-anchor="end">{_fmt_tick(t)}</text>'
        )
    ticks = max(span // 6, 1)
    for k in range(0, span + 1, ticks):
        day = d0 + dt.timedelta(days=k)
        out.append(
            f'<text x="{_f(x(day))}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle">{day.isoformat()}</text>'
        )
    for yv, color in chart.hlines:
        out.append(
            f'<line x1="{MARGIN_L}" y1="{_f(y(yv))}" x2="{WIDTH - MARGIN_R}" y2="{_f(y(yv))}" '
            f'stroke="{color}" stroke-width="1.2"/>'
        )
    for ln in chart.lines:
        # NaN breaks the polyline
        parts, cur = [], []
        for day, v in zip(ln.dates, np.asarray(ln.values, float)):
            if math.isfinite(v):
                cur.append(f"{_f(x(day))},{_f(y(v))}")
            elif cur:
                parts.append(cur)
                cur = []
        if cur:
            parts.append(cur)
        for pts in parts:
            out.append(
                f'<polyline fill="none" stroke="{ln.color}" stroke-width="{ln.width}" '
                f'points="{" ".join(pts)}"/>'
            )
    for day, color in chart.markers:
        if d0 <= day <= d1:
            out.append(
                f'<line x1="{_f(x(day))}" y1="{MARGIN_T}" x2="{_f(x(day))}" y2="{MARGIN_T + ph}" '
                f'stroke="{color}" stroke-width="1" stroke-dasharray="4,3"/>'
            )
    out.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )
    out.append(f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(chart.title)}</text>')
    if chart.ylabel:
        out.append(
            f'<text x="14" y="{MARGIN_T + ph / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {MARGIN_T + ph / 2:.0f})">{escape(chart.ylabel)}</text>'
        )
    lx = MARGIN_L + 10
    for k, ln in enumerate(l for l in chart.lines if l.label):
        ly = MARGIN_T + 14 + 14 * k
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{ln.color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(ln.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def phase_bands(breakpoints, end: dt.date) -> list:
    bands = []
    for i, bp in enumerate(breakpoints):
        stop = breakpoints[i + 1].date if i + 1 < len(breakpoints) else end
        bands.append((bp.date, stop, PHASE_COLORS[bp.phase]))
    return bands


def write(chart: Chart, path) -> None:
    Path(path).write_text(render(chart), encoding="utf-8")
