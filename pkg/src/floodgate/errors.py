"""Exception types shared across the package."""


class FloodgateError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FloodgateError):
    """An input value is outside its allowed domain."""


class SizeError(FloodgateError):
    """A sample or batch is too small for the requested operation."""


class ShapeError(FloodgateError):
    """Array dimensions are inconsistent."""


class SingularDesignError(FloodgateError):
    """A design matrix is rank deficient."""


class DegenerateLabelsError(FloodgateError):
    """Binary-response fitting received a single class."""


class UnsupportedClosedFormError(FloodgateError):
    """Closed-form conditional moments are not available for this
    model / working-regression combination; fall back to Monte Carlo."""
