"""Exception hierarchy shared across the package."""


class FieldRobotError(Exception):
    """Base class for all package errors."""


class ConfigError(FieldRobotError, ValueError):
    pass


class DegenerateReferenceError(FieldRobotError, ValueError):
    """Reference velocity is zero, so no heading can be derived from it."""


class SolverError(FieldRobotError):
    """Base class for optimizer failures."""


class LinearizationError(SolverError):
    def __init__(self, node: int, message: str = "non-finite residual"):
        super().__init__(f"{message} at node {node}")
        self.node = node


class QpInfeasibleError(SolverError):
    pass


class QpIterationLimitError(SolverError):
    pass


class EstimatorError(SolverError):
    pass


class SequencingError(FieldRobotError, ValueError):
    """Timestamps or frame indices arrived out of order."""


class MissingInitialFixError(FieldRobotError):
    pass


class PathExhaustedError(FieldRobotError):
    pass


class NoFeaturesError(FieldRobotError):
    pass


class FitUndefinedError(FieldRobotError, ValueError):
    pass


class EmptyInputError(FieldRobotError, ValueError):
    pass
