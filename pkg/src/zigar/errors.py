"""Exception types shared across the package."""


class ZigarError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ZigarError):
    """Raised when input data violates a precondition (empty, negative, NaN...)."""


class DegenerateColumnError(ZigarError):
    """Raised when a column cannot be processed (e.g. zero scale)."""


class SchemaError(ZigarError):
    """Raised when column names / layout of supplied data do not match expectations."""


class RankDeficiencyError(ZigarError):
    """Raised when an exact (unpenalized) solve hits a singular system."""


class ConfigError(ZigarError):
    """Raised for invalid scenario or tuning configuration."""


class ConvergenceError(ZigarError):
    """Raised when an iterative solver exhausts its iteration budget.

    Carries the last iterate and the KKT residual so callers can inspect
    how far from stationarity the solver stopped.
    """

    def __init__(self, message, beta=None, kkt_residual=None, n_iter=None):
        super().__init__(message)
        self.beta = beta
        self.kkt_residual = kkt_residual
        self.n_iter = n_iter
