"""Region-based active contours with exponential-family noise models."""

from .energy import EnergyReport, SpeedLaw, bhattacharyya
from .estimator import RegionCompetitionSegmenter
from .evaluation import aggregate, fpf_tpf, run_sweep
from .exceptions import (
    DegenerateRegionError,
    DomainError,
    EvaluationError,
    InitializationError,
    ParameterError,
    StatContourError,
)
from .expfam import FAMILIES, Gaussian, Poisson, Rayleigh, fit_region, get_family
from .levelset import EvolveConfig, segment
from .synth import BenchmarkSpec, calibrate, corrupt, make_phantom

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSpec",
    "DegenerateRegionError",
    "DomainError",
    "EnergyReport",
    "EvaluationError",
    "EvolveConfig",
    "FAMILIES",
    "Gaussian",
    "InitializationError",
    "ParameterError",
    "Poisson",
    "Rayleigh",
    "RegionCompetitionSegmenter",
    "SpeedLaw",
    "StatContourError",
    "aggregate",
    "bhattacharyya",
    "calibrate",
    "corrupt",
    "fit_region",
    "fpf_tpf",
    "get_family",
    "make_phantom",
    "run_sweep",
    "segment",
]
