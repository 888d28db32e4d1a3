"""Exception hierarchy shared by every ar2lab module."""


class Ar2labError(Exception):
    """Base class for all errors raised by ar2lab."""


class ValidationError(Ar2labError, ValueError):
    """Bad arguments or configuration (CLI exit code 1)."""


class SvdConvergenceError(Ar2labError):
    pass


class RankError(ValidationError):
    """Requested rank exceeds the numerical rank of the factors."""


class GenerationError(Ar2labError):
    """Repeated degenerate draws while generating a ground truth."""


class EmptySampleError(Ar2labError):
    """The sample set is empty, so the density estimate is zero."""


class DegenerateSpectrumError(Ar2labError):
    """A gap or singular value needed as a denominator is zero."""


class QuadratureError(Ar2labError):
    """Contour quadrature did not stabilise under node doubling."""


class ContourError(Ar2labError):
    """A contour does not separate the required eigenvalues."""


class HypothesisError(Ar2labError):
    """A Monte Carlo run was refused because its size condition fails."""


class ConfigError(ValidationError):
    pass


class SchemaError(Ar2labError):
    """Rows with heterogeneous column sets were passed to an aggregator."""
