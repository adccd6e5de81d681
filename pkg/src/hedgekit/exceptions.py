"""Exception and warning classes raised across hedgekit.

Errors fall into three families that map onto CLI exit codes:
``ConfigError`` (2), ``DataError`` (3) and ``SolverError`` (4).
"""


class HedgeKitError(Exception):
    """Base class for every hedgekit error."""


class ConfigError(HedgeKitError, ValueError):
    """Invalid user-supplied parameter."""


class DataError(HedgeKitError, ValueError):
    """Input data violates a precondition."""


class SolverError(HedgeKitError, ArithmeticError):
    """A numerical routine could not produce a trustworthy answer."""


# -- data ------------------------------------------------------------------

class MalformedCsv(DataError):
    pass


class NonPositivePrice(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"non-positive or missing price {value!r} at row {row}, column {column!r}"
        )


class DuplicateDate(DataError):
    pass


class FewerThanTwoRows(DataError):
    pass


class UnknownTarget(DataError):
    pass


class DegeneratePanel(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewResiduals(DataError):
    pass


class ZeroInstruments(DataError):
    pass


# -- configuration ---------------------------------------------------------

class InvalidAlpha(ConfigError):
    pass


class ZeroLength(ConfigError):
    pass


class NonPositiveCost(ConfigError):
    pass


class NonPositiveSigma(ConfigError):
    pass


# -- solver ----------------------------------------------------------------

class SingularDesign(SolverError):
    def __init__(self, message, columns=None):
        self.columns = list(columns) if columns is not None else []
        super().__init__(message)


class EigenFailure(SolverError):
    pass


class DegenerateCovariance(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class SingularScores(SolverError):
    pass


class IllConditionedGamma(SolverError):
    def __init__(self, condition_number):
        self.condition_number = condition_number
        super().__init__(
            f"loading matrix condition number {condition_number:.3g} >= 1e10; "
            "hedge ratios would be numerically meaningless"
        )


class NonFiniteLoss(SolverError):
    def __init__(self, message, history=None):
        self.history = history
        super().__init__(message)


# -- warnings --------------------------------------------------------------

class NotConverged(UserWarning):
    """Iterative solver stopped at its iteration cap; best iterate returned."""


class HeywoodCase(UserWarning):
    """A communality exceeded one and was clamped."""
