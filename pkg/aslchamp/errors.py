'''Exception types raised by aslchamp.

All errors derive from ``AslChampError``. Errors that describe a bad value
also derive from the matching builtin so generic callers can catch them.
File system problems are reported with the builtin ``OSError``.
'''


class AslChampError(Exception):
    '''Base class for all aslchamp errors.'''


class InvalidSample(AslChampError, ValueError):
    '''A GestureSample failed validation.

    The ``report`` attribute holds the ValidationReport, when available.
    '''
    def __init__(self, message, report=None):
        super(InvalidSample, self).__init__(message)
        self.report = report


class FormatError(AslChampError, ValueError):
    '''A file has a bad magic string, version or record layout.'''


class SchemaError(AslChampError, ValueError):
    '''A record read from disk does not satisfy the sample schema.'''


class InvalidTemplate(AslChampError, ValueError):
    pass


class MissingTemplate(AslChampError, LookupError):
    pass


class ShapeMismatch(AslChampError, ValueError):
    pass


class NonFiniteValue(AslChampError, ArithmeticError):
    pass


class IndexOutOfRange(AslChampError, IndexError):
    pass


class InvalidConfig(AslChampError, ValueError):
    pass


class EmptyDataset(AslChampError, ValueError):
    pass


class DivergenceDetected(AslChampError, ArithmeticError):
    '''Training loss became NaN or infinite.

    ``net`` is the network as it was at the end of the last finite epoch,
    ``epoch`` the epoch that diverged.
    '''
    def __init__(self, message, net=None, epoch=None):
        super(DivergenceDetected, self).__init__(message)
        self.net = net
        self.epoch = epoch


class ChecksumMismatch(AslChampError, ValueError):
    pass


class VersionMismatch(AslChampError, ValueError):
    pass


class InsufficientData(AslChampError, ValueError):
    pass


class ClassMismatch(AslChampError, ValueError):
    pass


class InvalidPlan(AslChampError, ValueError):
    pass
