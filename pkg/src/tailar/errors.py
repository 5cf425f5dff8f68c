"""Exception hierarchy shared by the library and the CLI."""


class TailarError(Exception):
    """Base class for all library errors."""


class DataError(TailarError):
    """Malformed or unsupported input data (bad CSV, edge missing values)."""


class NumericalError(TailarError):
    """A numerical routine could not complete (degenerate Gram matrix,
    covariance factorization failure after jitter escalation)."""
