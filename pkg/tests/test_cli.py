import datetime as dt
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from epiphase import __version__
from epiphase.cli import main
from epiphase.synth import generate, multiwave_spec

SVG = "{http://www.w3.org/2000/svg}"


def write_series(path, values, start=dt.date(2020, 1, 1)):
    lines = ["date,value"]
    lines += [f"{start + dt.timedelta(days=i)},{v}" for i, v in enumerate(values)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def case_csv(tmp_path, rng):
    return write_series(tmp_path / "cases.csv", rng.poisson(120, 150).tolist())


@pytest.fixture
def synthetic(tmp_path):
    out = tmp_path / "syn"
    assert main(["synth", "--multiwave", "3", "--waves", "2", "--out-dir", str(out)]) == 0
    return out


def test_indicators_length(tmp_path, case_csv):
    out = tmp_path / "ind.csv"
    assert main(["indicators", str(case_csv), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "date,mean,std,cv,skew,kurt,entropy,valid"
    assert len(lines) - 1 == 150 - 13


def test_indicators_too_short(tmp_path, capsys):
    csv = write_series(tmp_path / "short.csv", [5] * 10)
    assert main(["indicators", str(csv), "--out-dir", str(tmp_path / "o")]) == 1
    assert "series shorter than window" in capsys.readouterr().err


def test_indicators_rerun_is_byte_identical(tmp_path, case_csv):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["indicators", str(case_csv), "-o", str(a)])
    main(["indicators", str(case_csv), "-o", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_missing_input_file(tmp_path):
    assert main(["indicators", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 1


def test_stages_chain(tmp_path, case_csv):
    d = tmp_path / "run"
    assert main(["ingest", str(case_csv), "--rolling", "7", "-o", str(d / "smooth.csv")]) == 0
    assert len((d / "smooth.csv").read_text().splitlines()) == 1 + 150 - 6
    assert main(["indicators", str(case_csv), "--out-dir", str(d)]) == 0
    assert main(["pca", str(d / "indicators.csv"), "--out-dir", str(d)]) == 0
    model = json.loads((d / "pca_model.json").read_text())
    assert sum(model["explained"]) == pytest.approx(100.0, abs=1e-9)
    assert main(["score", str(d / "indicators.csv"), "--model", str(d / "pca_model.json"), "--out-dir", str(d)]) == 0
    assert main(["detect", str(d / "score.csv"), "--onset", "2020-03-01", "--out-dir", str(d)]) == 0
    report = json.loads((d / "detection.json").read_text())
    assert report["reference_onsets"] == ["2020-03-01"]
    assert (d / "overlay.csv").read_text().startswith("date,c1,event_flag\n")


def test_config_overrides_flags(tmp_path, case_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"window": 21, "entropy": "shannon"}))
    out = tmp_path / "ind.csv"
    assert main(["indicators", str(case_csv), "--window", "14", "--config", str(cfg), "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) - 1 == 150 - 20


@pytest.mark.parametrize("cfg", [{"window": 1}, {"bogus": 3}, {"entropy": "tsallis"}, {"lead_days": -2}])
def test_config_errors_exit_3(tmp_path, case_csv, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["indicators", str(case_csv), "--config", str(path), "--out-dir", str(tmp_path)]) == 3


def test_unreadable_config_exit_3(tmp_path, case_csv):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    assert main(["indicators", str(case_csv), "--config", str(path)]) == 3


def test_env_overrides_out_dir(tmp_path, case_csv, monkeypatch):
    monkeypatch.setenv("EPIPHASE_OUT_DIR", str(tmp_path / "env"))
    assert main(["indicators", str(case_csv), "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "indicators.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_pipeline_without_breakpoints(tmp_path, case_csv, caplog):
    out = tmp_path / "p"
    with caplog.at_level("WARNING", logger="epiphase"):
        assert main(["pipeline", str(case_csv), "--out-dir", str(out)]) == 0
    assert "fit stage skipped" in caplog.text
    for name in ("indicators.csv", "pca_model.json", "score.csv", "detection.json", "overlay.csv", "fig_score.svg"):
        assert (out / name).exists(), name
    assert not (out / "fit_report.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["stages"]["fit"] == "skipped"


def test_pipeline_artifacts_and_manifest(tmp_path, synthetic):
    out = tmp_path / "p"
    args = ["pipeline", str(synthetic / "series.csv"), "--breakpoints", str(synthetic / "breakpoints.json")]
    assert main(args + ["--out-dir", str(out)]) == 0
    for name in (
        "fit_report.json", "phase_model.json", "model_curves.csv",
        "fig_cumulative.svg", "fig_segments.svg", "fig_daily.svg",
    ):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["software"] == {"name": "epiphase", "version": __version__}
    assert manifest["config"]["threshold"] == 1.0
    assert len(manifest["input_sha256"]) == 64
    assert all(v == "ok" for v in manifest["stages"].values())
    fit = json.loads((out / "fit_report.json").read_text())
    assert [s["type"] for s in fit["segments"]] == ["endemic", "epidemic", "endemic", "epidemic", "endemic"]

    again = tmp_path / "q"
    assert main(args + ["--out-dir", str(again)]) == 0
    for path in sorted(out.iterdir()):
        if path.name != "manifest.json":
            assert path.read_bytes() == (again / path.name).read_bytes(), path.name
    m2 = json.loads((again / "manifest.json").read_text())
    m2["config"]["out_dir"] = manifest["config"]["out_dir"]
    assert m2 == manifest


def test_score_svg(tmp_path, synthetic):
    out = tmp_path / "p"
    main(["pipeline", str(synthetic / "series.csv"), "--breakpoints", str(synthetic / "breakpoints.json"),
          "--out-dir", str(out)])
    root = ET.parse(out / "fig_score.svg").getroot()
    assert root.tag == SVG + "svg"
    green = [ln for ln in root.iter(SVG + "line") if ln.get("stroke") == "green"]
    assert len(green) == 2
    ys = sorted(float(ln.get("y1")) for ln in green)
    assert ys[0] < ys[1]
    bands = {r.get("fill") for r in root.iter(SVG + "rect")}
    assert {"#fff3b0", "#cfe3ff"} <= bands
    for name in ("fig_cumulative.svg", "fig_segments.svg", "fig_daily.svg"):
        ET.parse(out / name)


def test_synthetic_two_wave_round_trip(tmp_path, synthetic):
    out = tmp_path / "p"
    main(["pipeline", str(synthetic / "series.csv"), "--breakpoints", str(synthetic / "breakpoints.json"),
          "--out-dir", str(out)])
    report = json.loads((out / "detection.json").read_text())
    assert report["n_references"] == 2
    assert report["performance_ratio"] == 1.0


def test_fit_without_breakpoints_is_config_error(tmp_path, case_csv):
    assert main(["fit", str(case_csv), "--out-dir", str(tmp_path)]) == 3


def test_fit_segment_failure_exit_code(tmp_path, case_csv):
    bps = tmp_path / "bps.json"
    bps.write_text(json.dumps([{"date": "2020-01-14", "phase": "endemic"},
                               {"date": "2020-05-27", "phase": "epidemic"}]))
    assert main(["fit", str(case_csv), "--breakpoints", str(bps), "--out-dir", str(tmp_path)]) == 1


def test_synth_outputs(tmp_path, synthetic):
    spec = json.loads((synthetic / "spec.json").read_text())
    assert spec["seed"] == 3
    res = generate(multiwave_spec(3, 2))
    lines = (synthetic / "series.csv").read_text().splitlines()
    assert len(lines) - 1 == len(res.series)
    assert float(lines[1].split(",")[1]) == res.series.values[0]
    truth = json.loads((synthetic / "truth.json").read_text())
    assert [s["type"] for s in truth["segments"]].count("epidemic") == 2
    assert main(["synth", str(synthetic / "spec.json"), "--out-dir", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "series.csv").read_bytes() == (synthetic / "series.csv").read_bytes()


def test_synth_needs_spec(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path)]) == 3


def test_verbose_flag_positions(tmp_path, case_csv):
    assert main(["-v", "indicators", str(case_csv), "-o", str(tmp_path / "a.csv")]) == 0
    assert main(["indicators", str(case_csv), "-v", "-o", str(tmp_path / "b.csv")]) == 0
