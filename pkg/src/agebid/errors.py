"""Exception hierarchy for the agebid package."""


class AgebidError(Exception):
    """Base class for all agebid errors."""


class DomainError(AgebidError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(AgebidError, ValueError):
    """A configuration or model description failed validation."""


class UndefinedConditionalError(DomainError):
    """Conditional price requested at a bid with zero win probability."""


class IntegrationError(AgebidError):
    """ODE integration failed (e.g. step underflow)."""

    def __init__(self, message, t_stop=None):
        super().__init__(message)
        self.t_stop = t_stop


class BracketError(AgebidError):
    """Initial bisection bracket does not straddle the stable initial value."""


class SolverError(AgebidError):
    """Shooting / bisection solver failed with diagnostics."""


class ModeError(AgebidError):
    """Operation called in the wrong discounting mode (e.g. gamma == 0)."""


class DivergenceError(AgebidError):
    """An improper integral diverges (e.g. a policy that never wins)."""


class DegenerateError(AgebidError):
    """Competition CDF is degenerate at zero (no initial slope)."""
