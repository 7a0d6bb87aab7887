class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class GridMismatchError(DomainError):
    """Two objects live on different grids."""


class NearSingularError(ArithmeticError):
    """Pivoted elimination met a pivot below the singularity threshold."""


class ConvergenceError(RuntimeError):
    """An iteration exhausted its budget."""


class ConfigError(ValueError):
    """Invalid run configuration."""
