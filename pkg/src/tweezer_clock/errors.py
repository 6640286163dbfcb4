"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """A physical or numerical argument is outside its valid domain."""


class ConfigError(ValueError):
    """A configuration file or object is malformed."""


class FitError(RuntimeError):
    """The fringe fit could not be performed (e.g. singular design matrix)."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge."""


class StabilityError(SolverError):
    """Time stepping lost norm beyond tolerance; the time step is too large."""
