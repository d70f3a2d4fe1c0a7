"""Exception hierarchy shared by the library modules and the management commands."""


class MSQNetError(Exception):
    """Base class for every error raised by the msqnet package."""


class ConfigurationError(MSQNetError, ValueError):
    """Invalid configuration: geometry, vocabulary, split or experiment settings."""


class ShapeError(MSQNetError, ValueError):
    """Operands whose shapes do not fit the operation."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        listed = ' and '.join(str(tuple(shape)) for shape in shapes)
        super().__init__(f'{op}: incompatible shapes {listed}')


class ContractViolation(MSQNetError, ValueError):
    """Input data breaks an operation's precondition."""


class EvaluationError(MSQNetError):
    """A metric is undefined for the given batch."""


class NumericalError(MSQNetError, ArithmeticError):
    """Non-finite values met during training or a forward pass."""

    def __init__(self, message, parameter=None, batch_seeds=None):
        super().__init__(message)
        self.parameter = parameter
        self.batch_seeds = list(batch_seeds) if batch_seeds is not None else None


class CheckpointError(MSQNetError):
    """Checkpoint file that cannot be read or does not match the model."""

    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor
