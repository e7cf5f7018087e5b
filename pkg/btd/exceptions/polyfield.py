from .btd_exception import InvalidArgumentError


class InvalidOrderError(InvalidArgumentError):
    detail = "Invalid polynomial order"
    description = "The polynomial order must lie between 1 and 8."


class InvalidFrameError(InvalidArgumentError):
    detail = "Invalid coordinate frame"
    description = "Frame centers must be finite and scales strictly positive."


class InvalidCoefficientsError(InvalidArgumentError):
    detail = "Invalid coefficient matrix"
    description = "The coefficient matrix must be finite with shape 3 x basis size."
