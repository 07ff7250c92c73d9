"""Exception hierarchy.

Every error carries an exit code so the command line front end can map
failures without inspecting types.
"""


class TypologyError(Exception):
    exit_code = 1


class ConfigError(TypologyError):
    exit_code = 1


class DataError(TypologyError):
    exit_code = 2


class ParseError(DataError):
    """A cell could not be parsed. ``row`` is the 1-based data row."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(TypologyError):
    exit_code = 3


class ConvergenceError(NumericalError):
    """Iterative solver hit its iteration cap. ``best`` holds the last/best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SeparationError(NumericalError):
    def __init__(self, message, predictor=None, klass=None):
        super().__init__(message)
        self.predictor = predictor
        self.klass = klass


class RankDeficientError(NumericalError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class EnumerationLimitError(ConfigError):
    def __init__(self, message, count=None, cap=None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class EmptyCandidateSetError(DataError):
    def __init__(self, message, stage_counts=None):
        super().__init__(message)
        self.stage_counts = dict(stage_counts or {})
