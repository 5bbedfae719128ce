"""Endemic/epidemic transition analysis of daily reported-case series.

Rolling 14-day shape indicators (CV, skewness, kurtosis, entropy) are
combined by PCA into a score C1(t); a threshold rule on C1 forecasts wave
onsets, and piecewise linear / Bernoulli-Verhulst models describe the
cumulative curve.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .detector import DetectionReport, DetectionRule, detect, reference_onsets_from_phase_model, score_performance, threshold_events
from .indicators import IndicatorSeries, WindowStats, approx_entropy, indicator_series, shannon_entropy, window_moments
from .ingest import CaseSeries, CumulativeSeries, cumulate, parse_csv, rolling_average
from .pca import PcaModel, ScoreSeries, eigen_sym, pca_fit, score_pc1, standardize
from .phenomodel import (
    EndemicSegment,
    EpidemicSegment,
    PhaseModel,
    assemble_phase_model,
    bv_rhs,
    endemic_eval,
    epidemic_eval,
    fit_endemic,
    fit_epidemic,
)
from .synth import SynthSpec, generate

__all__ = [
    "BACKEND", "CaseSeries", "CumulativeSeries", "DetectionReport", "DetectionRule",
    "EndemicSegment", "EpidemicSegment", "IndicatorSeries", "PcaModel", "PhaseModel",
    "ScoreSeries", "SynthSpec", "WindowStats", "approx_entropy", "assemble_phase_model",
    "bv_rhs", "cumulate", "detect", "eigen_sym", "endemic_eval", "epidemic_eval",
    "fit_endemic", "fit_epidemic", "generate", "indicator_series", "parse_csv",
    "pca_fit", "reference_onsets_from_phase_model", "rolling_average", "score_pc1",
    "score_performance", "shannon_entropy", "standardize", "threshold_events",
    "window_moments",
]
