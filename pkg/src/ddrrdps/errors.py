"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the domain of the formula."""


class ValidationError(ValueError):
    """Structurally invalid input (mismatched lengths, bad normalization, ...)."""


class DegenerateError(ArithmeticError):
    """A ratio or estimate is undefined because its denominator vanished."""


class InfeasibleError(RuntimeError):
    """The photon-statistics LP has no feasible point."""


class SolverError(RuntimeError):
    """Numerical breakdown inside the LP solver."""


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""
