"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` used by the CLI: 2 for bad input,
3 for numerical failures.
"""

from __future__ import annotations


class SerfsimError(Exception):
    exit_code = 2


# -- input / validation ------------------------------------------------------

class DataError(SerfsimError, ValueError):
    """Malformed trial data. Messages name the offending file, row and field."""


class MissingColumn(DataError):
    pass


class MissingValue(DataError):
    pass


class NonNumericField(DataError):
    pass


class InvalidValue(DataError):
    pass


class DuplicateKey(DataError):
    pass


class UnbalancedPanel(DataError):
    pass


class InconsistentTime(DataError):
    pass


class BiiOutOfRange(DataError):
    pass


class MissingBii(DataError):
    pass


class MissingCost(DataError):
    pass


class ConfigError(SerfsimError, ValueError):
    pass


# -- estimation --------------------------------------------------------------

class TauOutOfRange(SerfsimError, ValueError):
    pass


class InsufficientHarvests(SerfsimError, ValueError):
    pass


class TooFewRows(SerfsimError, ValueError):
    exit_code = 3


class RankDeficientDesign(SerfsimError, ArithmeticError):
    exit_code = 3


class DegenerateLP(SerfsimError, ArithmeticError):
    exit_code = 3


class BootstrapFailure(SerfsimError, ArithmeticError):
    exit_code = 3


# -- economics ---------------------------------------------------------------

class NonPositiveWealthAdjustedProfit(SerfsimError, ValueError):
    def __init__(self, message: str, min_w0: float | None = None):
        super().__init__(message)
        self.min_w0 = min_w0


class RacNotInGrid(SerfsimError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


# -- simulation --------------------------------------------------------------

class ModelTauMismatch(SerfsimError, ValueError):
    pass


class UnknownTreatment(SerfsimError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class MissingPrices(SerfsimError, ValueError):
    pass
