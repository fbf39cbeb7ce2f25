"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent with the requested operation."""


class ParameterError(ValueError):
    """A scalar parameter (rank, sketch width, compression dim, ...) is out of range."""


class DegenerateInputError(ValueError):
    """Input is numerically degenerate (zero signal, rank-deficient basis, ...)."""


class DegenerateDirectionError(RuntimeError):
    """Line search direction has zero curvature; no step can be computed."""


class SizeError(ValueError):
    """Dense-oracle instance exceeds the configured size threshold."""


class ConfigError(ValueError):
    """Run configuration is inconsistent or infeasible."""


class ArrayFormatError(ValueError):
    """Binary tensor file has a bad magic, version, or header."""
