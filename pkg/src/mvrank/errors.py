"""Exception hierarchy shared by all mvrank modules."""


class MvRankError(Exception):
    """Base class for every error raised by mvrank."""


class ShapeError(MvRankError, ValueError):
    pass


class InputError(MvRankError, ValueError):
    pass


class DataError(MvRankError, ValueError):
    pass


class ManifestError(DataError):
    pass


class ParseError(DataError):
    pass


class StateError(MvRankError, RuntimeError):
    pass


class NumericalError(MvRankError, ArithmeticError):
    pass


class DegenerateError(NumericalError):
    """Raised when a trace-ratio denominator vanishes."""


class TrainingError(MvRankError, RuntimeError):
    pass


class FormatVersionError(MvRankError):
    pass
