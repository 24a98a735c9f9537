"""Exception types raised across the bench, calibration and referencing code."""


class PhaseBenchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PhaseBenchError):
    pass


class NoSolution(PhaseBenchError):
    """A null depth that the amplitude imbalance alone already exceeds."""


class InvalidDivider(PhaseBenchError):
    pass


class ParseError(PhaseBenchError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class DuplicateFrequency(ParseError):
    pass


class InvariantError(PhaseBenchError):
    pass


class UnknownFrequency(PhaseBenchError):
    pass


class NullNotFound(PhaseBenchError):
    pass


class Timeout(PhaseBenchError):
    pass


class RetriesExhausted(PhaseBenchError):
    pass


class NoPeriodicity(PhaseBenchError):
    pass


class NoCrossing(PhaseBenchError):
    pass


class AmbiguityUnresolved(PhaseBenchError):
    pass


class DegenerateCurve(PhaseBenchError):
    pass
