"""Exception types raised across the library."""


class ManifoolError(Exception):
    """Base class for all library-specific errors."""


class NonFiniteError(ManifoolError):
    """An input contains NaN or infinite entries."""


class SingularTransformError(ManifoolError):
    """A transform matrix is singular or numerically non-invertible."""


class NotInImageError(ManifoolError):
    """A matrix is not reachable by the principal-branch exponential map."""


class ProjectionResidualError(ManifoolError):
    """A matrix logarithm does not lie in the span of the generator basis."""


class DegenerateJacobianError(ManifoolError):
    """The appearance Jacobian carries no usable signal (e.g. constant image)."""


class EmptyClassError(ManifoolError):
    """A class has no samples."""


class DivergedError(ManifoolError):
    """Training produced a non-finite loss."""


class ZeroImageError(ManifoolError):
    """An image has (numerically) zero norm."""


class NoSamplesError(ManifoolError):
    """No successful samples to aggregate."""


class UnreachableDistanceError(ManifoolError):
    """The target geodesic distance cannot be reached for this image."""


class ConfigError(ManifoolError):
    """Malformed configuration text or an unknown configuration key."""
