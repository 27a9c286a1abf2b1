"""Exception hierarchy shared by all modules."""


class HemdError(Exception):
    """Base class for every error raised by this package."""


class OverlapError(HemdError, ValueError):
    """Two instances that must be disjoint share a pixel."""


class RangeError(HemdError, ValueError):
    pass


class FormatError(HemdError, ValueError):
    pass


class ShapeError(HemdError, ValueError):
    pass


class EmptyError(HemdError, ValueError):
    pass


class LabelOverflowError(HemdError, ValueError):
    pass


class UnknownNodeError(HemdError, KeyError):
    pass


class TooLargeError(HemdError, ValueError):
    pass


class DisjointnessError(HemdError, AssertionError):
    pass


class DegenerateError(HemdError, ValueError):
    pass


class ConfigError(HemdError, ValueError):
    pass
