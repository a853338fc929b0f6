"""Reliable transmission durations from survival analysis of fading links."""

from .channel import (
    FadingConfig,
    RssTrace,
    SampleSet,
    collect_sample_sets,
    extract_durations,
    generate_rss_trace,
    read_sample_set,
    write_sample_set,
)
from .datadriven import DataDrivenSurvival, MLPFailureRegressor, MlpModel, TrainConfig
from .evaluation import SweepSpec, f_score, run_sweep, score_tau_star
from .exceptions import SurvlinkError
from .survival import EmpiricalCdf, TauStar, conditional_failure, solve_tau_star
from .weibull import WeibullParams, WeibullSurvival, fit_mle

__version__ = "0.1.0"

__all__ = [
    "FadingConfig",
    "RssTrace",
    "SampleSet",
    "collect_sample_sets",
    "extract_durations",
    "generate_rss_trace",
    "read_sample_set",
    "write_sample_set",
    "DataDrivenSurvival",
    "MLPFailureRegressor",
    "MlpModel",
    "TrainConfig",
    "SweepSpec",
    "f_score",
    "run_sweep",
    "score_tau_star",
    "SurvlinkError",
    "EmpiricalCdf",
    "TauStar",
    "conditional_failure",
    "solve_tau_star",
    "WeibullParams",
    "WeibullSurvival",
    "fit_mle",
]
