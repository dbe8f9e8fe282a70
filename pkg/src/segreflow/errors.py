"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: configuration problems exit
with 2, numerical non-convergence with 3 and invariant violations with 4.
"""


class SegreflowError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(SegreflowError, ValueError):
    """Invalid configuration or precondition on user-supplied parameters."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class GridMismatchError(SegreflowError, ValueError):
    """Two objects defined on different grids were combined."""


class EmptySupportError(SegreflowError, ValueError):
    """A field or mask that must be nonzero is identically zero."""


class DegeneratePartitionError(EmptySupportError):
    """A component of an extracted partition has empty support."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class ConvergenceError(SegreflowError, RuntimeError):
    """An iterative method exhausted its budget."""

    exit_code = 3

    def __init__(self, message, residual=None, component=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.component = component
        self.iterations = iterations


class InvariantError(SegreflowError, AssertionError):
    """A postcondition that should hold by construction was violated."""

    exit_code = 4
