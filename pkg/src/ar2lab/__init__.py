"""ar2lab: approximate-and-round matrix recovery and an infinity-norm perturbation lab."""

from .errors import (
    Ar2labError,
    ConfigError,
    ContourError,
    DegenerateSpectrumError,
    EmptySampleError,
    GenerationError,
    HypothesisError,
    QuadratureError,
    RankError,
    SchemaError,
    SvdConvergenceError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "Ar2labError",
    "ConfigError",
    "ContourError",
    "DegenerateSpectrumError",
    "EmptySampleError",
    "GenerationError",
    "HypothesisError",
    "QuadratureError",
    "RankError",
    "SchemaError",
    "SvdConvergenceError",
    "ValidationError",
    "__version__",
]
