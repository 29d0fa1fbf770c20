"""Exception hierarchy shared by every module."""


class PinnDaeError(Exception):
    """Base class for all errors raised by the package."""


class ArgumentError(PinnDaeError, ValueError):
    pass


class DomainError(PinnDaeError, ValueError):
    pass


class StateError(PinnDaeError, RuntimeError):
    pass


class EvaluationError(PinnDaeError, ArithmeticError):
    """A non-finite or undefined value appeared during evaluation."""

    def __init__(self, message, node_id=None):
        super().__init__(message)
        self.node_id = node_id


class StiffnessError(PinnDaeError, RuntimeError):
    pass


class InternalError(PinnDaeError, RuntimeError):
    pass


class MetricError(PinnDaeError, ValueError):
    pass


class TrainingError(PinnDaeError, RuntimeError):
    def __init__(self, message, epoch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.history = history
