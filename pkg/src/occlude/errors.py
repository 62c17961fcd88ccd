"""Exception hierarchy.

Every exception carries an ``exit_code`` used by the command-line interface.
Data problems exit with 1 and usage problems with 2; the estimand-file parser uses
distinct codes per failure class so batch scripts can tell them apart.
"""


class OccludeError(Exception):
    exit_code = 1


class DataError(OccludeError):
    """Input data violate a contract (invalid timeline, empty dataset, ...)."""

    exit_code = 1


class NotAssessableError(DataError):
    """A subject carries none of the streams an estimand is built from."""


class EstimationError(DataError):
    """An estimator cannot produce a finite answer for the given data."""


class NonfiniteMLEError(EstimationError):
    def __init__(self, direction):
        self.direction = direction
        super().__init__(f"nonfinite MLE: partial likelihood is monotone, beta -> {direction}inf")


class ContractViolation(OccludeError):
    """A function was called outside its documented preconditions."""

    exit_code = 2


class UsageError(OccludeError):
    exit_code = 2


class SpecError(OccludeError):
    exit_code = 6

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SpecSyntaxError(SpecError):
    exit_code = 3


class UnknownStrategyError(SpecError):
    exit_code = 4


class MissingFieldError(SpecError):
    exit_code = 5
