"""Exception types shared across the package.

The split mirrors what callers can act on: bad input data versus a request
that is well-formed but cannot be satisfied for the given design.
"""


class DataError(ValueError):
    """Input data is unusable: parse failures, ragged tables, rank problems."""


class InfeasibleError(ValueError):
    """Request cannot be satisfied, e.g. symmetric form with rank < columns."""
