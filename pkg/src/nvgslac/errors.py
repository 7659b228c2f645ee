"""Exception hierarchy shared by the library and the command line tool.

Each class carries the process exit code the CLI maps it to.
"""


class NvGslacError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(NvGslacError, ValueError):
    """Invalid argument or configuration value."""

    exit_code = 2


class ParseError(NvGslacError, ValueError):
    """Malformed input file."""

    exit_code = 3


class ConvergenceError(NvGslacError, RuntimeError):
    """Optimizer exhausted its evaluation budget.

    ``best`` holds the best result found so far (or None).
    """

    exit_code = 4

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ResourceLimitError(NvGslacError, RuntimeError):
    """A configured resource cap (matrix dimension, memory) would be exceeded."""

    exit_code = 5
