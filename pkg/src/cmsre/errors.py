"""Exception types shared across the package."""


class CmsreError(Exception):
    """Base class for all library-specific errors."""


class DatasetError(CmsreError):
    """Invalid manifest, matrix file, or dataset structure."""


class ConvergenceError(CmsreError):
    """An iterative solver exhausted its iteration budget."""


class NumericalError(CmsreError):
    """A numerical kernel failed or produced non-finite values."""
