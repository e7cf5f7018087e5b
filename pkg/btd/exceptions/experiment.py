from .btd_exception import InvalidArgumentError, NumericalError


class ConflictingOptionsError(InvalidArgumentError):
    detail = "Conflicting options"
    description = "Two options were given that cannot be combined."


class ExperimentFailedError(NumericalError):
    detail = "Experiment failed"
    description = "At least one experiment cell failed."
