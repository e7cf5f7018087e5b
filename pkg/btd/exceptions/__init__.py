from .btd_exception import BTDException, FormatError, InvalidArgumentError, NumericalError


__all__ = ["BTDException", "FormatError", "InvalidArgumentError", "NumericalError"]
