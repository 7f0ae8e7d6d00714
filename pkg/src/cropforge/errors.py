"""Exception types raised across the package."""


class CropforgeError(Exception):
    """Base class for all package errors."""


class ShapeError(CropforgeError, ValueError):
    pass


class ParameterError(CropforgeError, ValueError):
    pass


class GeometryError(CropforgeError, ValueError):
    pass


class NumericError(CropforgeError, ArithmeticError):
    pass


class TrainingStateError(CropforgeError, RuntimeError):
    pass


class TrainingDivergedError(CropforgeError, RuntimeError):
    """Raised when a loss or gradient goes non-finite; carries the stage and sample id."""

    def __init__(self, stage, sample_id, value, what="loss"):
        self.stage = stage
        self.sample_id = sample_id
        self.value = value
        super().__init__(
            f"non-finite {what} {value!r} in stage {stage} on sample {sample_id!r}"
        )


class CheckpointError(CropforgeError, ValueError):
    pass
