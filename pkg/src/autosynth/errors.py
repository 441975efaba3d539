"""Exception types shared across the package."""


class AutosynthError(Exception):
    """Base class for all package-specific errors."""


class EmptySurface(AutosynthError):
    """An isosurface or clip operation produced no geometry."""


class SingularTransform(AutosynthError):
    """The linear part of an affine transform is not invertible."""


class DegenerateMesh(AutosynthError):
    """A mesh has no usable geometry (zero area, coincident vertices)."""


class NothingVisible(AutosynthError):
    """A depth render covered no pixels."""


class EmptyDepth(AutosynthError):
    """A depth map has no hit pixels to back-project."""


class SizeMismatch(AutosynthError):
    """Two point clouds that must be the same size are not."""


class ShapeMismatch(AutosynthError):
    """An array does not match the shape a model expects."""


class NonFinite(AutosynthError):
    """Training produced a non-finite loss (learning rate too high)."""


class RetryExhausted(AutosynthError):
    """Repeated generation attempts all produced empty geometry."""
