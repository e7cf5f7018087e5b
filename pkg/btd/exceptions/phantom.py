from .btd_exception import InvalidArgumentError


class InvalidPhantomSpecError(InvalidArgumentError):
    detail = "Invalid phantom parameters"
    description = "The phantom geometry does not fit into the requested grid."
