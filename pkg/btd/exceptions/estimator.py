from .btd_exception import InvalidArgumentError, NumericalError


class EmptyMaskError(InvalidArgumentError):
    detail = "Empty bundle mask"
    description = "The bundle mask does not contain any voxel."


class EmptySeedRegionError(InvalidArgumentError):
    detail = "Empty seed region"
    description = "The seed region does not contain any masked voxel."


class ShapeMismatchError(InvalidArgumentError):
    detail = "Shape mismatch"
    description = "Grids passed together must share their dimensions."


class DegenerateInputError(NumericalError):
    detail = "Degenerate input"
    description = "The least squares system has numerical rank zero."
