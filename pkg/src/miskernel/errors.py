"""Exception types shared across the package."""


class MisKernelError(Exception):
    """Base class for all errors raised by this package."""


class MalformedInputError(MisKernelError, ValueError):
    """Raised when an input graph, partition file, or flag value is invalid."""


class UsageError(MisKernelError, ValueError):
    """Raised when an operation is called with arguments that violate its
    preconditions (hiding a hidden vertex, self-loop rewrite, ...)."""


class InternalInvariantError(MisKernelError, RuntimeError):
    """Raised when an internal consistency check fails. Indicates a bug."""


class OracleLimitError(MisKernelError, ValueError):
    """Raised when a brute-force oracle is asked to solve an instance above
    its configured size limit."""
