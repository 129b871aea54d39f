"""Exception types raised by the solver."""


class NPhaseError(Exception):
    """Base class for all solver errors."""


class DomainError(NPhaseError, ValueError):
    """An argument lies outside the domain of a thermodynamic function."""


class UnsupportedExponentError(DomainError):
    """Power-law internal energy requested with gamma == 1."""


class AdmissibilityError(NPhaseError, ValueError):
    """A state vector violates positivity or saturation."""

    def __init__(self, message, violations=(), cell=None):
        super().__init__(message)
        self.violations = list(violations)
        self.cell = cell


class SolverSetupError(NPhaseError, RuntimeError):
    """Relaxation parameters could not be selected within the iteration cap."""


class InconsistentSetupError(NPhaseError, RuntimeError):
    """The fixed-point function has no sign change across its bracket."""


class PositivityError(NPhaseError, RuntimeError):
    """An intermediate specific volume of the Riemann fan is not positive."""

    def __init__(self, message, phase=None, cell=None):
        super().__init__(message)
        self.phase = phase
        self.cell = cell


class TableConsistencyError(NPhaseError, ValueError):
    """Tabulated reference states violate the jump relations or wave invariants."""
