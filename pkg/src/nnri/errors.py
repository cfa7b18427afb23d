"""Exception hierarchy.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, numeric failures exit 4.
"""


class NNRIError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(NNRIError, ValueError):
    exit_code = 2


class DataError(NNRIError, ValueError):
    exit_code = 3


class DegenerateSizeError(DataError):
    """A unit's size rounds to zero multinomial trials."""


class DesignError(DataError):
    """Allocation or replication is undefined for the sample design."""


class ResponseError(DataError):
    """An imputation cell ended up without respondents."""


class ImputationError(DataError):
    """Donor matching could not be carried out."""

    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


class NumericError(NNRIError, ArithmeticError):
    exit_code = 4


class FitError(NumericError):
    """A smoother failed to fit; ``diagnostics`` carries the solver trace."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
