"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PercolabError(Exception):
    exit_code = 1


class ConfigError(PercolabError, ValueError):
    exit_code = 2


class AddressError(PercolabError, ValueError):
    """A vertex address that does not belong to the construction."""

    exit_code = 2


class ScheduleError(PercolabError, ValueError):
    exit_code = 2


class NormalizabilityError(PercolabError):
    """The root-measure series diverges (or cannot be certified to converge)."""

    exit_code = 3

    def __init__(self, message, series=None, partial_sums=None):
        super().__init__(message)
        self.series = series
        self.partial_sums = list(partial_sums or [])


class DivergenceError(PercolabError, ValueError):
    exit_code = 3


class PrecisionError(PercolabError):
    exit_code = 3


class AuditError(PercolabError):
    exit_code = 4


class BudgetError(PercolabError):
    """Raised when a finite exploration exceeds its vertex budget.

    ``partial`` holds whatever was built before the budget ran out.
    """

    exit_code = 5

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
