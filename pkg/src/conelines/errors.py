"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command-line driver:
2 for bad input/configuration, 3 for numerical non-convergence and
4 for violated internal invariants.
"""


class ConeLinesError(Exception):
    exit_code = 4


class ConfigError(ConeLinesError):
    exit_code = 2


class DomainError(ConfigError):
    """An input lies outside the admissible parameter domain."""


class UnstableRangeError(ConfigError):
    """Cusp parameters fall outside the strictly unstable range."""


class SetupError(ConfigError):
    """A problem definition is inconsistent (e.g. non-positive metric on the grid)."""


class SingularPointError(ConeLinesError):
    """Evaluation requested on the conical set, where the quantity is undefined."""

    exit_code = 2


class NumericalError(ConeLinesError):
    exit_code = 3


class QuadratureError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class FitError(NumericalError):
    pass


class GridError(NumericalError):
    pass


class ProbeError(ConfigError):
    pass


class ConditioningError(NumericalError):
    pass


class DegenerateError(NumericalError):
    pass


class PositivityError(NumericalError):
    pass


class NonPositiveMetricError(ConeLinesError):
    pass


class NotModeledError(ConeLinesError):
    pass
