"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes): ``InputError``
for problems with the data or arguments, ``NumericalError`` for failures
inside the fitting machinery.
"""


class SmileError(Exception):
    """Base class for every error raised by this package."""


class InputError(SmileError, ValueError):
    pass


class NumericalError(SmileError, ArithmeticError):
    pass


# -- ingestion ---------------------------------------------------------------

class MissingColumn(InputError):
    pass


class NonNumericCell(InputError):
    def __init__(self, row, col, value=""):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")


class EmptyFile(InputError):
    pass


class AlreadyCentered(InputError):
    pass


class InvalidArgs(InputError):
    pass


# -- basis / smoothing -------------------------------------------------------

class DegenerateColumn(InputError):
    pass


class InvalidN(InvalidArgs):
    pass


class EmptyBin(InputError):
    def __init__(self, J, msg=None):
        self.J = J
        super().__init__(msg or f"knot bin {J} contains no observations")


class UnsupportedOrder(InvalidArgs):
    pass


class SingularPilotFit(NumericalError):
    pass


class InsufficientLocalData(NumericalError):
    pass


class BandwidthTooLarge(InputError):
    pass


# -- solver / pipeline -------------------------------------------------------

class NonFiniteObjective(NumericalError):
    pass


class DidNotConverge(NumericalError):
    def __init__(self, msg, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(msg)


class AllGroupsExcluded(NumericalError):
    pass


class ModelSingular(NumericalError):
    def __init__(self, msg, columns=()):
        self.columns = tuple(columns)
        super().__init__(msg)


class IndexNotNonlinear(InputError):
    pass
