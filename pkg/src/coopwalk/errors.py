"""Exception hierarchy shared by all coopwalk modules."""


class CoopwalkError(Exception):
    """Base class for library errors."""


class ContractViolation(CoopwalkError, ValueError):
    """Input violates a documented precondition (shape, finiteness, range)."""


class ConfigError(CoopwalkError, ValueError):
    """Malformed model, gait or scenario document."""

    def __init__(self, message, *, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class RankDeficientConstraint(CoopwalkError):
    """Stacked contact Jacobian lost row rank."""


class ModelError(CoopwalkError):
    """Model data produced an impossible numerical state (e.g. singular D)."""


class GuardStall(CoopwalkError):
    """Guard crossed non-transversally."""


class IntegratorFailure(CoopwalkError):
    """Adaptive step size collapsed below the minimum."""


class DomainViolation(CoopwalkError):
    """Unilateral or friction admissibility failed and escalation is enabled."""


class DegenerateGeometry(CoopwalkError):
    """Leash endpoints coincide in the ground plane; bearing undefined."""


class DecouplingSingular(CoopwalkError):
    """Decoupling matrix A lost row rank (A A^T near singular)."""


class QPInfeasible(CoopwalkError):
    """No point satisfies the inequality rows and the box bounds."""

    def __init__(self, message, *, worst_row=None, violation=None):
        self.worst_row = worst_row
        self.violation = violation
        super().__init__(message)


class MaxIterations(CoopwalkError):
    """Iterative solver hit its iteration cap."""


class NoReturn(CoopwalkError):
    """Trajectory did not come back to the Poincare section within budget."""

    def __init__(self, message, *, cause=None):
        self.cause = cause
        super().__init__(message)


class NonConvergence(CoopwalkError):
    """Newton iteration for a fixed point did not converge."""


class SingularJacobian(CoopwalkError):
    """dE/dx = dP/dx - I is singular at the fixed point guess."""


class SchemaMismatch(CoopwalkError):
    """Two run summaries come from different schema versions."""
