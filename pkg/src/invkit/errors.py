"""Exception taxonomy shared by all invkit modules."""


class InvkitError(Exception):
    """Base class for all errors raised by this package."""


class EmptyOperand(InvkitError):
    """An interval/box operation received an empty operand."""


class DomainError(InvkitError):
    """An operation left its mathematical domain (division by an interval
    containing zero, log of an interval touching non-positive values, ...)."""


class DegenerateBox(InvkitError):
    """Bisection requested on a zero-width box."""


class NegativeRadius(InvkitError):
    """inflate/deflate called with r < 0."""


class MisalignedBox(InvkitError):
    """A box is not generatable by canonical bisection of the region root."""


class ExprSyntaxError(InvkitError):
    """Expression source failed to parse; carries a ParseDiagnostic."""

    def __init__(self, diagnostic):
        self.diagnostic = diagnostic
        super().__init__(f"at offset {diagnostic.position}: {diagnostic.message}")


class UnknownVariable(InvkitError):
    """Variable index out of range for the declared state dimension."""


class NonIntegerExponent(InvkitError):
    """'^' must be followed by a literal non-negative integer."""


class NonDifferentiable(InvkitError):
    """Symbolic derivative requested through an abs() node."""


class NotConverging(InvkitError):
    """Lyapunov series did not converge (spectral radius >= 1)."""


class OriginOutside(InvkitError):
    """Lyapunov margin estimation needs the origin inside the box."""


class IterationBudgetExceeded(InvkitError):
    """Synthesis exceeded the configured sweep budget.

    Carries the partial result computed so far, when available.
    """

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class CertificationFailure(InvkitError):
    """Inner-approximation re-verification found an uncovered box.

    This indicates an internal bug, never an expected outcome.
    """


class EmptyResult(InvkitError):
    """Controller extraction rejected a non-certified or empty result."""


class InfeasibleStart(InvkitError):
    """Simulation started outside the controller domain."""


class ConformanceBreach(InvkitError):
    """Admissible mode set emptied during a closed-loop simulation."""


class ConfigError(InvkitError):
    """System-definition file failed validation; message names the field."""
