"""Exception types shared across the package."""


class SceneLayoutError(Exception):
    """Base class for all scenelayout errors."""


class PointBehindCameraError(SceneLayoutError):
    """A point with Z <= 0 cannot be projected through a pinhole camera."""


class DegenerateMeshError(SceneLayoutError):
    """Mesh has no usable extent (zero bounding box or zero surface area)."""


class EmptyVisibilityError(SceneLayoutError):
    """An operation that needs covered pixels found none."""


class DegenerateObservationError(SceneLayoutError):
    """Observed bounding box has zero width or height."""


class RankDeficientSystemError(SceneLayoutError):
    """The layout system has rank < number of unknowns."""

    def __init__(self, message, deficient_columns=()):
        super().__init__(message)
        self.deficient_columns = frozenset(deficient_columns)


class NonPhysicalScaleError(SceneLayoutError):
    """The solved scale was <= 0 even after the damped retry."""


class SolveDivergedError(SceneLayoutError):
    """The iterative solve moved the object entirely out of view."""


class EmptyMaskError(SceneLayoutError):
    """A mask with no covered pixels was given where one is required."""


class EmptyObservationError(SceneLayoutError):
    """Rotation estimation target has no covered pixels."""


class DegenerateGeometryError(SceneLayoutError):
    """Point sets are too degenerate (e.g. collinear) for a rigid fit."""


class PlacementFailedError(SceneLayoutError):
    """Scene synthesis could not place an object within the attempt budget."""


class ExternalEstimatorError(SceneLayoutError):
    """The external rotation estimator did not produce a usable answer."""
