"""Exception types. Each carries the CLI exit code it maps to."""


class ProcestError(Exception):
    exit_code = 1


class UsageError(ProcestError, ValueError):
    """Bad arguments or configuration."""

    exit_code = 1


class DataError(ProcestError, ValueError):
    """Input data violates a format or invariant."""

    exit_code = 2


class NumericError(ProcestError, ArithmeticError):
    """Non-finite values or training divergence."""

    exit_code = 3
