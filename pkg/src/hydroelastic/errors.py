"""Exception hierarchy shared by every module of the package."""


class HydroelasticError(Exception):
    """Base class for all package errors."""


class ValidationError(HydroelasticError, ValueError):
    """Raised when a configuration or argument violates a documented precondition."""


class MisalignmentError(ValidationError):
    """A structure endpoint or joint cannot be placed on a vertical grid line."""


class TopologyError(HydroelasticError):
    """Mesh entities are inconsistent (e.g. a joint that is not shared by two structure facets)."""


class SingularMatrixError(HydroelasticError):
    """A direct factorization met an exactly zero pivot.

    :param pivot: index of the offending pivot when it could be located, else ``None``.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class SolverError(HydroelasticError):
    """A linear solve failed or its residual exceeded the admissible bound."""
