"""Exception types shared across the package."""


class SphereFVError(Exception):
    """Base class for all package errors."""


class SingularPointError(SphereFVError):
    """A geometric operation was requested at (or too close to) a chart singularity."""


class PoleError(SingularPointError):
    """Evaluation at a sphere pole, where the tangent basis is not defined."""


class DegenerateSampleError(SphereFVError):
    """A sample point made a computation degenerate (e.g. vanishing vector field)."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ConfigError(SphereFVError):
    """Invalid configuration (mesh parameters, scenario file, registry lookup)."""


class InputError(SphereFVError):
    """Invalid runtime input data (non-finite samples, states, ...)."""
