"""Exception hierarchy shared by every stage."""


class CalibrationError(Exception):
    """Base class for all errors raised by posecalib."""


class GeometryError(CalibrationError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class RayParallelToPlane(GeometryError):
    pass


class DegenerateBasis(GeometryError):
    pass


class MissingJoints(CalibrationError):
    pass


class DegenerateConfiguration(CalibrationError):
    pass


class NegativeFocalSquared(CalibrationError):
    """The focal closed form produced f^2 <= 0 (or depths of mixed sign).

    Raised for outlier triples; RANSAC treats it as a failed hypothesis and
    the simulation trials count it towards ``fail_pct``.
    """


class InsufficientData(CalibrationError):
    pass


class CalibrationFailed(CalibrationError):
    pass


class EmptyInput(CalibrationError):
    pass


class EmptySignal(EmptyInput):
    pass


class EmptyCloud(EmptyInput):
    pass


class TooFewCorrespondences(CalibrationError):
    pass


class NoSharedObservations(CalibrationError):
    pass


class DivergenceDetected(CalibrationError):
    pass


class FrustumExhausted(CalibrationError):
    pass


class UnknownTarget(CalibrationError):
    pass


class MismatchedRigs(CalibrationError):
    pass


class ParseError(CalibrationError):
    pass


class SchemaError(CalibrationError):
    pass


class EmptySequence(SchemaError):
    pass


class StageError(CalibrationError):
    """A pipeline stage failed for a specific camera."""

    def __init__(self, stage, camera_id, cause):
        self.stage = stage
        self.camera_id = camera_id
        self.cause = cause
        super().__init__(f"stage {stage!r} failed for camera {camera_id!r}: {cause}")


class IoError(CalibrationError, OSError):
    pass


class InvariantViolation(CalibrationError):
    """An internal consistency check failed (CLI exit code 4)."""
