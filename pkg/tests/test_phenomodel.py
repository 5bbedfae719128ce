import datetime as dt
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiphase.errors import (
    ConfigError,
    InvalidDataError,
    InvalidParametersError,
    OutOfSegmentError,
    SegmentFitError,
    TooFewPointsError,
)
from epiphase.ingest import CumulativeSeries
from epiphase.phenomodel import (
    Breakpoint,
    EndemicSegment,
    EpidemicSegment,
    PhaseModel,
    _pack,
    assemble_phase_model,
    bv_curve,
    bv_daily_rate,
    bv_residual_jacobian,
    bv_rhs,
    endemic_eval,
    epidemic_eval,
    fit_endemic,
    fit_epidemic,
    inflection_level,
    load_breakpoints,
    refine_breakpoints,
    save_breakpoints,
)
from oracles import logistic

T0 = dt.date(2020, 3, 1)
T1 = dt.date(2021, 3, 1)
WAVE = dict(n_base=0.0, n0=100.0, n_inf=1e5, chi=0.1, theta=2.0)


def epi(n_base=0.0, n0=100.0, n_inf=1000.0, chi=0.2, theta=1.0):
    return EpidemicSegment(T0, T1, n_base, n0, n_inf, chi, theta)


def cumulative(values, start=T0):
    return CumulativeSeries(start, np.asarray(values, dtype=float))


def noisy_wave(seed, days=120, scale=0.01, **kw):
    p = {**WAVE, **kw}
    rng = np.random.default_rng(seed)
    y = bv_curve(np.arange(days, dtype=float), p["n_base"], p["n0"], p["n_inf"], p["chi"], p["theta"])
    d = np.diff(y, prepend=p["n_base"])
    d = d * (1.0 + scale * rng.standard_normal(days))
    return cumulative(p["n_base"] + np.cumsum(np.maximum(d, 0.0)))


# -- evaluation -------------------------------------------------------------------


def test_endemic_eval():
    seg = EndemicSegment(T0, T0 + dt.timedelta(days=30), 100.0, 10.0)
    assert endemic_eval(seg, T0) == 100.0
    assert endemic_eval(seg, T0 + dt.timedelta(days=5)) == 150.0
    for k in range(30):
        assert endemic_eval(seg, k + 1) - endemic_eval(seg, k) == 10.0
    with pytest.raises(OutOfSegmentError):
        endemic_eval(seg, T0 - dt.timedelta(days=1))
    with pytest.raises(OutOfSegmentError):
        endemic_eval(seg, 31)


def test_segment_invariants():
    with pytest.raises(InvalidParametersError):
        EndemicSegment(T0, T0, 0.0, 1.0)
    with pytest.raises(InvalidParametersError):
        EndemicSegment(T0, T1, 0.0, -1.0)
    for bad in (dict(n0=0.0), dict(n_inf=50.0), dict(chi=0.0), dict(theta=-1.0), dict(n_base=-1.0)):
        with pytest.raises(InvalidParametersError):
            epi(**bad)


def test_epidemic_anchor_and_logistic_example():
    seg = epi(n_base=7.0)
    assert epidemic_eval(seg, T0) == pytest.approx(107.0, rel=1e-15)
    seg = epi()
    expected = 100 * math.e**2 / (1 + 0.1 * (math.e**2 - 1))
    assert epidemic_eval(seg, 10) == pytest.approx(expected, rel=1e-13)
    assert epidemic_eval(seg, 10) == pytest.approx(450.85306037928376, rel=1e-13)
    with pytest.raises(OutOfSegmentError):
        epidemic_eval(seg, -1)


def test_epidemic_asymptote():
    seg = epi(n_base=12.0, theta=0.7)
    far = 10 / seg.chi * 100
    assert epidemic_eval(seg, far) == pytest.approx(12.0 + seg.N_inf, rel=1e-6)


@pytest.mark.parametrize("chi,n0,n_inf", [(0.2, 100.0, 1000.0), (0.05, 3.0, 1e6), (1.0, 1.0, 10.0)])
def test_theta_one_is_logistic(chi, n0, n_inf):
    seg = epi(n0=n0, n_inf=n_inf, chi=chi)
    for tau in np.linspace(0, 300, 301):
        assert epidemic_eval(seg, tau) == pytest.approx(logistic(tau, n0, n_inf, chi), rel=1e-12)


def test_rhs_examples():
    seg = epi(chi=0.2, theta=2.0)
    assert bv_rhs(seg, 500.0) == pytest.approx(75.0, rel=1e-14)
    assert bv_rhs(seg, seg.N_inf) == 0.0
    assert bv_rhs(seg, 1e-6) == pytest.approx(0.2e-6, rel=1e-9)
    assert bv_rhs(seg, 1200.0) < 0
    with pytest.raises(InvalidParametersError):
        bv_rhs(EndemicSegment(T0, T1, 0.0, 1.0), 10.0)


def fd_derivative(seg, tau, h=1e-3):
    """Fourth-order central difference of the closed form with step ``h``."""
    def f(t):
        return float(bv_curve(t, seg.N_base, seg.N0, seg.N_inf, seg.chi, seg.theta))
    return (f(tau - 2 * h) - 8 * f(tau - h) + 8 * f(tau + h) - f(tau + 2 * h)) / (12 * h)


@pytest.mark.parametrize("chi", [0.01, 0.1, 1.0])
@pytest.mark.parametrize("theta", [0.25, 1.0, 4.0])
@pytest.mark.parametrize("ratio", [10.0, 1e4])
def test_closed_form_solves_ode(chi, theta, ratio):
    seg = epi(n_base=50.0, n0=10.0, n_inf=10.0 * ratio, chi=chi, theta=theta)
    for tau in np.linspace(0, 200, 201):
        n = epidemic_eval(seg, tau) - seg.N_base
        # past saturation the derivative is below the rounding floor of N
        if 1.0 - (n / seg.N_inf) ** theta < 1e-3:
            continue
        rhs = bv_rhs(seg, n)
        assert abs(fd_derivative(seg, tau) - rhs) <= 1e-6 * abs(rhs), tau


def test_daily_rate_matches_rhs():
    seg = epi(n0=20.0, n_inf=5e4, chi=0.15, theta=1.7)
    tau = np.linspace(0, 150, 151)
    rate = bv_daily_rate(tau, seg.N0, seg.N_inf, seg.chi, seg.theta)
    for t, r in zip(tau, rate):
        n = epidemic_eval(seg, t)
        if 1.0 - (n / seg.N_inf) ** seg.theta < 1e-3:
            continue  # rhs from a rounded N has no digits left here
        assert r == pytest.approx(bv_rhs(seg, n), rel=1e-12)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0, 3.5])
def test_inflection_point(theta):
    seg = epi(n0=10.0, n_inf=1e5, chi=0.12, theta=theta)
    tau = np.arange(0.0, 400.0, 0.01)
    rate = bv_daily_rate(tau, seg.N0, seg.N_inf, seg.chi, seg.theta)
    t_peak = tau[np.argmax(rate)]
    n = bv_curve(tau, 0.0, seg.N0, seg.N_inf, seg.chi, seg.theta)
    t_level = tau[np.argmin(np.abs(n - inflection_level(seg)))]
    assert abs(t_peak - t_level) <= 0.1


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.01, 1.0), st.floats(0.25, 4.0),
    st.floats(1.0, 1e3), st.floats(1.5, 1e4),
)
def test_monotone(chi, theta, n0, ratio):
    tau = np.linspace(0, 40 / chi, 400)
    y = bv_curve(tau, 0.0, n0, n0 * ratio, chi, theta)
    rate = bv_daily_rate(tau, n0, n0 * ratio, chi, theta)
    assert np.all(rate > 0)
    assert np.all(np.diff(y) >= 0)
    assert np.all(y <= n0 * ratio * (1 + 1e-12))


# -- Jacobian ---------------------------------------------------------------------


@pytest.mark.parametrize("params", [
    (0.0, 100.0, 1e5, 0.1, 2.0),
    (500.0, 3.0, 2e4, 0.3, 0.5),
    (10.0, 50.0, 600.0, 0.05, 1.0),
])
def test_jacobian_matches_finite_differences(params):
    tau = np.arange(0.0, 150.0)
    p = _pack(*params)
    _, J = bv_residual_jacobian(tau, p)
    for k in range(5):
        h = 1.0 if k == 0 else 1e-6 * max(1.0, abs(p[k]))  # N_base enters linearly
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        fd = (bv_residual_jacobian(tau, up)[0] - bv_residual_jacobian(tau, dn)[0]) / (2 * h)
        scale = np.abs(J[:, k]).max()
        assert np.abs(fd - J[:, k]).max() <= 1e-6 * scale


# -- endemic fit ------------------------------------------------------------------


def test_fit_endemic_exact_line():
    c = cumulative(50.0 + 3.0 * np.arange(20))
    res = fit_endemic(c, T0, T0 + dt.timedelta(days=19))
    assert res.segment.N0 == pytest.approx(50.0, abs=1e-9)
    assert res.segment.a == pytest.approx(3.0, abs=1e-9)
    assert res.ssr < 1e-18


def test_fit_endemic_noise(rng):
    t = np.arange(200.0)
    c = cumulative(10.0 + 4.0 * t + rng.normal(size=200))
    a = fit_endemic(c, T0, T0 + dt.timedelta(days=199)).segment.a
    se = 1.0 / math.sqrt(((t - t.mean()) ** 2).sum())
    assert abs(a - 4.0) <= 3 * se


def test_fit_endemic_negative_slope():
    c = cumulative([10.0, 9.0, 8.0, 7.0])
    res = fit_endemic(c, T0, T0 + dt.timedelta(days=3))
    assert res.segment.a == 0.0
    assert res.segment.N0 == pytest.approx(8.5)
    assert res.warnings


def test_fit_endemic_too_few_points():
    with pytest.raises(TooFewPointsError):
        fit_endemic(cumulative([1.0, 2.0]), T0, T0 + dt.timedelta(days=1))


# -- epidemic fit -----------------------------------------------------------------


def test_fit_epidemic_noiseless_recovery():
    c = noisy_wave(0, scale=0.0)
    res = fit_epidemic(c, T0, T0 + dt.timedelta(days=119))
    s = res.segment
    assert res.converged
    assert s.N0 == pytest.approx(100.0, rel=1e-3)
    assert s.N_inf == pytest.approx(1e5, rel=1e-3)
    assert s.chi == pytest.approx(0.1, rel=1e-3)
    assert s.theta == pytest.approx(2.0, rel=1e-3)
    assert s.N_base == pytest.approx(0.0, abs=1e-3 * 100.0)


def test_fit_epidemic_with_base():
    c = noisy_wave(0, scale=0.0, n_base=3000.0, chi=0.15, theta=0.8, n0=250.0, n_inf=4e4)
    s = fit_epidemic(c, T0, T0 + dt.timedelta(days=119)).segment
    for got, want in ((s.N_base, 3000.0), (s.N0, 250.0), (s.N_inf, 4e4), (s.chi, 0.15), (s.theta, 0.8)):
        assert got == pytest.approx(want, rel=1e-3)


def test_fit_epidemic_noisy_median():
    fits = [fit_epidemic(noisy_wave(seed), T0, T0 + dt.timedelta(days=119)).segment for seed in range(10)]
    assert abs(np.median([f.N_inf for f in fits]) / 1e5 - 1) <= 0.05
    assert abs(np.median([f.chi for f in fits]) / 0.1 - 1) <= 0.10
    for f in fits:
        assert 0 < f.N0 < f.N_inf and f.chi > 0 and f.theta > 0 and f.N_base >= 0


def test_fit_epidemic_errors():
    with pytest.raises(InvalidDataError):
        fit_epidemic(cumulative(np.arange(20.0)[::-1]), T0, T0 + dt.timedelta(days=19))
    with pytest.raises(TooFewPointsError):
        fit_epidemic(cumulative(np.arange(7.0)), T0, T0 + dt.timedelta(days=6))
    with pytest.raises(InvalidDataError):
        fit_epidemic(cumulative(np.full(20, 5.0)), T0, T0 + dt.timedelta(days=19))


# -- piecewise --------------------------------------------------------------------


def two_phase(days_end=60, days_epi=120):
    endemic = 1000.0 + 80.0 * np.arange(days_end)
    n_prev = endemic[-1] + 80.0
    epi_curve = bv_curve(np.arange(days_epi, dtype=float), n_prev - 800.0, 800.0, 6e4, 0.12, 1.3)
    return cumulative(np.concatenate([endemic, epi_curve]))


def test_assemble_single_endemic():
    c = cumulative(5.0 + 2.0 * np.arange(30))
    fit = assemble_phase_model(c, [Breakpoint(T0, "endemic")])
    assert len(fit.model.segments) == 1
    direct = fit_endemic(c, T0, c.end_date).segment
    assert fit.model.segments[0].a == pytest.approx(direct.a, rel=1e-12)
    assert fit.model.segments[0].t1 == c.end_date


def test_assemble_endemic_then_epidemic(tmp_path):
    c = two_phase()
    onset = T0 + dt.timedelta(days=60)
    fit = assemble_phase_model(c, [Breakpoint(T0, "endemic"), Breakpoint(onset, "epidemic")])
    end, ep = fit.model.segments
    assert end.t1 == ep.t0 == onset
    assert end.a == pytest.approx(80.0, rel=1e-9)
    assert ep.N_inf == pytest.approx(6e4, rel=1e-3)
    assert ep.chi == pytest.approx(0.12, rel=1e-3)
    assert ep.theta == pytest.approx(1.3, rel=1e-3)
    assert len(fit.dates) == len(c)
    assert np.all(fit.model_daily[61:] > 0)
    fit.write_curves(tmp_path / "curves.csv")
    lines = (tmp_path / "curves.csv").read_text().splitlines()
    assert lines[0] == "date,model_cumulative,model_daily"
    assert len(lines) == len(c) + 1
    report = fit.report()
    assert [s["type"] for s in report["segments"]] == ["endemic", "epidemic"]
    assert {"N_base", "N0", "N_inf", "chi", "theta", "ssr", "converged"} <= set(report["segments"][1])


def test_refine_recovers_shifted_breakpoint():
    c = two_phase()
    onset = T0 + dt.timedelta(days=60)
    bps = [Breakpoint(T0, "endemic"), Breakpoint(onset + dt.timedelta(days=3), "epidemic")]
    refined = refine_breakpoints(c, bps, radius=5)
    assert refined[1].date == onset


def test_misordered_breakpoints():
    c = two_phase()
    bps = [Breakpoint(T0 + dt.timedelta(days=60), "epidemic"), Breakpoint(T0, "endemic")]
    with pytest.raises(ConfigError):
        assemble_phase_model(c, bps)
    with pytest.raises(ConfigError):
        assemble_phase_model(c, [])
    with pytest.raises(ConfigError):
        Breakpoint(T0, "plateau")


def test_segment_error_carries_index():
    c = two_phase()
    bps = [Breakpoint(T0, "endemic"), Breakpoint(c.end_date - dt.timedelta(days=3), "epidemic")]
    with pytest.raises(SegmentFitError) as info:
        assemble_phase_model(c, bps)
    assert info.value.index == 1
    assert isinstance(info.value.cause, TooFewPointsError)


def test_breakpoint_json_roundtrip(tmp_path):
    bps = [Breakpoint(T0, "endemic"), Breakpoint(T0 + dt.timedelta(days=40), "epidemic")]
    save_breakpoints(bps, tmp_path / "b.json")
    assert json.loads((tmp_path / "b.json").read_text())[1] == {"date": "2020-04-10", "phase": "epidemic"}
    assert load_breakpoints(tmp_path / "b.json") == bps
    (tmp_path / "bad.json").write_text('[{"date": "2020-01-01"}]')
    with pytest.raises(ConfigError):
        load_breakpoints(tmp_path / "bad.json")


def test_phase_model_contiguity_and_json():
    mid = T0 + dt.timedelta(days=30)
    a = EndemicSegment(T0, mid, 0.0, 5.0)
    b = EpidemicSegment(mid, T1, 150.0, 10.0, 1e4, 0.1, 1.0)
    pm = PhaseModel([a, b], "x")
    assert pm.segment_at(mid) is b
    assert pm.cumulative(T1) == pytest.approx(b.cumulative((T1 - mid).days))
    assert pm.join_gaps() == [pytest.approx(10.0)]
    back = PhaseModel.from_json(json.loads(json.dumps(pm.to_json())))
    assert back.segments == pm.segments
    with pytest.raises(InvalidParametersError):
        PhaseModel([a, EndemicSegment(mid + dt.timedelta(days=1), T1, 0.0, 1.0)])
    with pytest.raises(OutOfSegmentError):
        pm.daily(T1 + dt.timedelta(days=1))
