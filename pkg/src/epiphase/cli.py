"""Command-line front end.

Each stage reads and writes documented files so it can be run on its own;
``pipeline`` chains them and adds SVG figures and a run manifest.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, svg
from .detector import DetectionRule, detect, write_overlay_csv
from .errors import ConfigError, EpiphaseError, InputError, NumericalError, SegmentFitError
from .indicators import indicator_series, read_indicator_csv, write_indicator_csv
from .ingest import cumulate, parse_csv, rolling_average, write_csv
from .pca import PcaModel, pca_fit, read_score_csv, score_pc1, write_score_csv
from .phenomodel import assemble_phase_model, load_breakpoints, refine_breakpoints, save_breakpoints
from .synth import SynthSpec, generate, multiwave_spec

log = logging.getLogger("epiphase")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3
OUT_DIR_ENV = "EPIPHASE_OUT_DIR"


@dataclass
class RunConfig:
    input: str | None = None
    date_column: str = "date"
    value_column: str = "value"
    where: str | None = None
    fill: str = "zero"
    window: int = 14
    entropy: str = "apen"
    apen_m: int = 2
    apen_r: float = 0.2
    bins: int = 5
    pca_rows: str = "all"
    threshold: float = 1.0
    lead_days: int = 7
    match_tolerance: int = 14
    smooth: int = 14
    breakpoints: str | None = None
    refine: bool = False
    out_dir: str = "out"

    def validate(self) -> None:
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        if self.smooth < 1:
            raise ConfigError("smooth must be >= 1")
        if self.lead_days < 0 or self.match_tolerance < 0:
            raise ConfigError("lead_days and match_tolerance must be >= 0")
        if self.entropy not in ("apen", "shannon"):
            raise ConfigError("entropy must be 'apen' or 'shannon'")
        if self.pca_rows not in ("all", "endemic"):
            raise ConfigError("pca_rows must be 'all' or 'endemic'")
        if self.apen_m < 1 or self.apen_r <= 0 or self.bins < 1:
            raise ConfigError("apen_m >= 1, apen_r > 0 and bins >= 1 are required")

    @property
    def rule(self) -> DetectionRule:
        return DetectionRule(self.threshold, self.lead_days, self.match_tolerance)

    @property
    def where_pair(self):
        if not self.where:
            return None
        if "=" not in self.where:
            raise ConfigError("--where expects COLUMN=VALUE")
        col, val = self.where.split("=", 1)
        return col, val


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _add_config_flags(p: argparse.ArgumentParser, names) -> None:
    helps = {
        "date_column": "date column name", "value_column": "daily count column name",
        "where": "keep rows with COLUMN=VALUE", "fill": "missing-date policy (zero|ffill)",
        "window": "indicator window in days", "entropy": "apen or shannon",
        "apen_m": "ApEn template length", "apen_r": "ApEn tolerance as a fraction of the window std",
        "bins": "histogram bins for Shannon entropy", "pca_rows": "rows used to fit the PCA (all|endemic)",
        "threshold": "C1 threshold", "lead_days": "days from down-crossing to predicted onset",
        "match_tolerance": "days allowed between predicted and reference onset",
        "smooth": "rolling-average window applied before fitting",
        "breakpoints": "breakpoint JSON file", "refine": "refine breakpoints by +/-5 days",
        "out_dir": f"output directory (env {OUT_DIR_ENV} overrides)",
    }
    for name in names:
        f = FIELDS[name]
        flag = "--" + name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, action="store_true", default=None, help=helps.get(name))
        else:
            typ = {"int": int, "float": float}.get(str(f.type), str)
            p.add_argument(flag, type=typ, default=None, help=helps.get(name))


def build_config(args) -> RunConfig:
    values = {}
    for name in FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        values["out_dir"] = env_out
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def _load_series(cfg: RunConfig):
    if not cfg.input:
        raise ConfigError("an input CSV is required")
    res = parse_csv(cfg.input, cfg.date_column, cfg.value_column, fill=cfg.fill, where=cfg.where_pair)
    if res.clamped:
        log.warning("clamped %d negative values", res.clamped)
    if res.filled:
        log.warning("filled %d missing dates (%s)", len(res.filled), cfg.fill)
    return res.series


def _indicators(cfg: RunConfig, series):
    return indicator_series(
        series, cfg.window, entropy=cfg.entropy, m=cfg.apen_m, r_factor=cfg.apen_r, bins=cfg.bins
    )


def _out(cfg: RunConfig, explicit: str | None, default_name: str) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = Path(cfg.out_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _pca_mask(cfg: RunConfig, ind, breakpoints):
    if cfg.pca_rows == "all":
        return None
    if not breakpoints:
        raise ConfigError("pca_rows=endemic needs a breakpoint file")
    mask = np.zeros(len(ind), dtype=bool)
    for i, day in enumerate(ind.dates()):
        phase = None
        for bp in breakpoints:
            if bp.date <= day:
                phase = bp.phase
        mask[i] = phase == "endemic"
    return mask


# -- subcommands ------------------------------------------------------------------


def cmd_ingest(cfg, args):
    series = _load_series(cfg)
    if args.rolling:
        series = rolling_average(series, args.rolling)
    path = _out(cfg, args.output, "series.csv")
    write_csv(series, path)
    log.info("wrote %s (%d days)", path, len(series))


def cmd_indicators(cfg, args):
    ind = _indicators(cfg, _load_series(cfg))
    path = _out(cfg, args.output, "indicators.csv")
    write_indicator_csv(ind, path)
    log.info("wrote %s (%d rows, %d valid)", path, len(ind), int(ind.valid.sum()))


def cmd_pca(cfg, args):
    ind = read_indicator_csv(args.indicators, cfg.window, cfg.entropy)
    bps = load_breakpoints(cfg.breakpoints) if cfg.breakpoints else None
    model = pca_fit(ind, _pca_mask(cfg, ind, bps))
    path = _out(cfg, args.output, "pca_model.json")
    model.save(path)
    log.info("explained variance %s", np.round(model.explained, 2).tolist())


def cmd_score(cfg, args):
    ind = read_indicator_csv(args.indicators, cfg.window, cfg.entropy)
    model = PcaModel.load(args.model)
    path = _out(cfg, args.output, "score.csv")
    write_score_csv(score_pc1(model, ind), path)


def _reference_onsets(cfg, extra):
    onsets = [dt.date.fromisoformat(d) for d in (extra or [])]
    if cfg.breakpoints:
        onsets += [bp.date for bp in load_breakpoints(cfg.breakpoints) if bp.phase == "epidemic"]
    return sorted(set(onsets))


def cmd_detect(cfg, args):
    score = read_score_csv(args.score)
    report = detect(score, _reference_onsets(cfg, args.onset), cfg.rule)
    report.save(_out(cfg, args.output, "detection.json"))
    write_overlay_csv(score, report, _out(cfg, args.overlay, "overlay.csv"))
    ratio = report.performance_ratio
    log.info(
        "%d events, %d/%d onsets matched (ratio %s, tolerance +/-%d days)",
        len(report.events), len(report.matched), len(report.reference_onsets),
        "n/a" if ratio != ratio else f"{ratio:.3f}", cfg.match_tolerance,
    )


def _fit(cfg, series):
    if not cfg.breakpoints:
        raise ConfigError("fitting needs --breakpoints")
    bps = load_breakpoints(cfg.breakpoints)
    smoothed = rolling_average(series, cfg.smooth) if cfg.smooth > 1 else series
    cum = cumulate(smoothed)
    if cfg.refine:
        bps = refine_breakpoints(cum, bps)
    return assemble_phase_model(cum, bps), cum, smoothed, bps


def cmd_fit(cfg, args):
    fit, _, _, bps = _fit(cfg, _load_series(cfg))
    _write_fit(cfg, fit, bps)


def _write_fit(cfg, fit, bps):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fit_report.json").write_text(json.dumps(fit.report(), indent=2) + "\n", encoding="utf-8")
    (out / "phase_model.json").write_text(json.dumps(fit.model.to_json(), indent=2) + "\n", encoding="utf-8")
    fit.write_curves(out / "model_curves.csv")
    if cfg.refine:
        save_breakpoints(bps, out / "breakpoints_refined.json")
    if not all(f.converged for f in fit.fits):
        raise NumericalError("at least one epidemic segment did not converge (see fit_report.json)")


def cmd_synth(cfg, args):
    if args.multiwave is not None:
        spec = multiwave_spec(args.multiwave, args.waves)
    elif args.spec:
        spec = SynthSpec.load(args.spec)
    else:
        raise ConfigError("synth needs a spec file or --multiwave SEED")
    res = generate(spec)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(res.series, out / "series.csv")
    (out / "truth.json").write_text(json.dumps(res.truth.to_json(), indent=2) + "\n", encoding="utf-8")
    save_breakpoints(res.breakpoints(), out / "breakpoints.json")
    (out / "spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n", encoding="utf-8")


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_pipeline(cfg, args):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "software": {"name": "epiphase", "version": __version__},
        "config": dataclasses.asdict(cfg),
        "input_sha256": _digest(cfg.input) if cfg.input and Path(cfg.input).exists() else None,
        "stages": {},
    }

    def finish(code):
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return code

    try:
        series = _load_series(cfg)
        ind = _indicators(cfg, series)
        write_indicator_csv(ind, out / "indicators.csv")
        manifest["stages"]["indicators"] = "ok"

        bps = load_breakpoints(cfg.breakpoints) if cfg.breakpoints else None
        model = pca_fit(ind, _pca_mask(cfg, ind, bps))
        model.save(out / "pca_model.json")
        score = score_pc1(model, ind)
        write_score_csv(score, out / "score.csv")
        manifest["stages"]["pca"] = "ok"

        onsets = sorted(bp.date for bp in bps if bp.phase == "epidemic") if bps else []
        report = detect(score, onsets, cfg.rule)
        report.save(out / "detection.json")
        write_overlay_csv(score, report, out / "overlay.csv")
        manifest["stages"]["detect"] = "ok"
        _score_figure(cfg, score, report, bps, series, out / "fig_score.svg")
    except EpiphaseError as exc:
        log.error("%s", exc)
        manifest["stages"]["error"] = str(exc)
        return finish(_exit_code(exc))
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc)
        manifest["stages"]["error"] = f"file not found: {exc}"
        return finish(EXIT_INPUT)

    if not bps:
        log.warning("no breakpoint file given; fit stage skipped")
        manifest["stages"]["fit"] = "skipped"
        return finish(EXIT_OK)
    try:
        fit, cum, smoothed, used_bps = _fit(cfg, series)
        _fit_figures(fit, cum, smoothed, used_bps, out)
        _write_fit(cfg, fit, used_bps)
        manifest["stages"]["fit"] = "ok"
    except EpiphaseError as exc:
        log.error("%s", exc)
        manifest["stages"]["fit"] = f"failed: {exc}"
        return finish(_exit_code(exc))
    return finish(EXIT_OK)


def _score_figure(cfg, score, report, bps, series, path):
    chart = svg.Chart(
        title=f"First principal component C1(t) {series.label}".strip(),
        ylabel="C1",
        lines=[svg.Line(score.dates(), score.values, "black")],
        hlines=[(cfg.threshold, "green"), (-cfg.threshold, "green")],
        markers=[(e.predicted_onset_date, "red") for e in report.events],
    )
    if bps:
        chart.bands = svg.phase_bands(bps, score.dates()[-1])
    svg.write(chart, path)


def _fit_figures(fit, cum, smoothed, bps, out):
    dates = fit.dates
    i0 = (dates[0] - cum.start_date).days
    data_cum = cum.values[i0 : i0 + len(dates)]
    data_daily = smoothed.values[i0 : i0 + len(dates)]
    bands = svg.phase_bands(bps, dates[-1])
    svg.write(
        svg.Chart(
            "Cumulative cases (14-day rolling average) and model", "cases",
            [svg.Line(dates, data_cum, "black", "data"), svg.Line(dates, fit.model_cumulative, "blue", "model")],
        ),
        out / "fig_cumulative.svg",
    )
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    lines = [svg.Line(dates, data_cum, "black", "data")]
    for k, seg in enumerate(fit.model.segments):
        idx = [i for i, d in enumerate(dates) if fit.model.segment_at(d) is seg]
        lines.append(svg.Line([dates[i] for i in idx], fit.model_cumulative[idx], palette[k % len(palette)], width=2.0))
    svg.write(svg.Chart("Phenomenological model per period", "cases", lines, bands=bands), out / "fig_segments.svg")
    svg.write(
        svg.Chart(
            "Daily cases (14-day rolling average) and model derivative", "cases/day",
            [svg.Line(dates, data_daily, "black", "data"), svg.Line(dates, fit.model_daily, "blue", "model")],
        ),
        out / "fig_daily.svg",
    )


def _exit_code(exc) -> int:
    if isinstance(exc, SegmentFitError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    return EXIT_INPUT


# -- parser -------------------------------------------------------------------------

INPUT_FLAGS = ("date_column", "value_column", "where", "fill")
INDICATOR_FLAGS = ("window", "entropy", "apen_m", "apen_r", "bins")
RULE_FLAGS = ("threshold", "lead_days", "match_tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epiphase", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"epiphase {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, flags, with_input=True):
        p = sub.add_parser(name, help=help_)
        if with_input:
            p.add_argument("input", nargs="?", help="daily case CSV")
        p.add_argument("--config", help="JSON config; its keys override flags")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        _add_config_flags(p, flags + ("out_dir",))
        return p

    p = add("ingest", "validate and normalise a case CSV", INPUT_FLAGS)
    p.add_argument("--rolling", type=int, default=None, help="apply a trailing rolling average")
    p.add_argument("-o", "--output")

    p = add("indicators", "rolling CV / skewness / kurtosis / entropy", INPUT_FLAGS + INDICATOR_FLAGS)
    p.add_argument("-o", "--output")

    p = add("pca", "fit the indicator PCA", INDICATOR_FLAGS + ("pca_rows", "breakpoints"), with_input=False)
    p.add_argument("indicators", help="indicator CSV")
    p.add_argument("-o", "--output")

    p = add("score", "first-component score C1(t)", INDICATOR_FLAGS, with_input=False)
    p.add_argument("indicators", help="indicator CSV")
    p.add_argument("--model", required=True, help="PCA model JSON")
    p.add_argument("-o", "--output")

    p = add("detect", "threshold events and retro-prediction ratio", RULE_FLAGS + ("breakpoints",), with_input=False)
    p.add_argument("score", help="score CSV (date,c1)")
    p.add_argument("--onset", action="append", help="reference onset date (repeatable)")
    p.add_argument("-o", "--output")
    p.add_argument("--overlay", help="overlay CSV path")

    add("fit", "fit the piecewise phenomenological model", INPUT_FLAGS + ("smooth", "breakpoints", "refine"))

    p = add("synth", "generate a synthetic series with ground truth", (), with_input=False)
    p.add_argument("spec", nargs="?", help="synthetic spec JSON")
    p.add_argument("--multiwave", type=int, metavar="SEED", help="random 2-4 wave scenario")
    p.add_argument("--waves", type=int, default=None)

    add(
        "pipeline", "run every stage and write reports and figures",
        INPUT_FLAGS + INDICATOR_FLAGS + RULE_FLAGS + ("pca_rows", "smooth", "breakpoints", "refine"),
    )
    return parser


COMMANDS = {
    "ingest": cmd_ingest, "indicators": cmd_indicators, "pca": cmd_pca, "score": cmd_score,
    "detect": cmd_detect, "fit": cmd_fit, "synth": cmd_synth, "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        code = COMMANDS[args.command](cfg, args)
    except EpiphaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
