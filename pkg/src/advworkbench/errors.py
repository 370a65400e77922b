"""Exception hierarchy shared by every module of the workbench."""


class WorkbenchError(Exception):
    """Base class for all errors raised by advworkbench."""


class ShapeError(WorkbenchError, ValueError):
    """Operand shapes do not compose."""


class InvalidSpecError(WorkbenchError, ValueError):
    """A model spec does not shape-check; the message names the first bad layer."""


class TemperatureError(WorkbenchError, ValueError):
    pass


class NonScalarLossError(WorkbenchError, ValueError):
    pass


class NonFiniteGradientError(WorkbenchError, FloatingPointError):
    pass


class DatasetError(WorkbenchError, ValueError):
    pass


class BadMagicError(DatasetError):
    pass


class CountMismatchError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class SplitOverflowError(DatasetError):
    pass


class CheckpointError(WorkbenchError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class DescriptorMismatchError(CheckpointError):
    pass
