"""Relaxation finite-volume solver for the N-phase barotropic model."""

from .eos import Eos
from .exceptions import (
    AdmissibilityError,
    DomainError,
    InconsistentSetupError,
    NPhaseError,
    PositivityError,
    SolverSetupError,
    UnsupportedExponentError,
)

__version__ = "0.1.0"
