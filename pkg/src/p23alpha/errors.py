"""Exception types raised across the package."""


class OutOfRange(ValueError):
    """A parameter lies outside its admissible domain."""


class DimensionMismatch(ValueError):
    """Bounds and covariance disagree in dimension."""


class NotPositiveDefinite(ValueError):
    """A covariance matrix is not (semi)definite as required."""


class NoConvergence(RuntimeError):
    """The alpha* root finder failed to close its bracket."""
