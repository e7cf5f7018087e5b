class BTDException(Exception):
    exit_code: int = 1
    detail: str
    description: str

    def __init__(self, message: str | None = None) -> None:
        super().__init__(message or self.detail)


class InvalidArgumentError(BTDException):
    exit_code = 2
    detail = "Invalid argument"
    description = "An argument is outside the range the operation accepts."


class FormatError(BTDException):
    exit_code = 3
    detail = "Invalid file format"
    description = "A file could not be parsed or is inconsistent with its header."


class NumericalError(BTDException):
    exit_code = 4
    detail = "Numerical failure"
    description = "A numerical routine could not produce a result for the given input."
