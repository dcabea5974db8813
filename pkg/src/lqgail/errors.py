"""Exception taxonomy shared across the package."""

from __future__ import annotations


class LqgailError(Exception):
    """Base class for all package errors."""


class ContractError(LqgailError):
    """Inputs violate a documented precondition (dimensions, symmetry, signs)."""


class NumericalFailureError(LqgailError):
    """A numerical routine failed to meet its accuracy contract."""


class InstabilityError(LqgailError):
    """A policy (or an iterate produced mid-run) is not stabilizing.

    Carries the offending spectral radius, the iteration index when raised
    mid-run, and the partial trace when one exists.
    """

    def __init__(self, message, rho=None, iteration=None, trace=None):
        super().__init__(message)
        self.rho = rho
        self.iteration = iteration
        self.trace = trace


class NotStabilizableError(LqgailError):
    """Riccati iteration diverged: (A, B) not stabilizable for this cost."""


class UnsupportedError(LqgailError):
    """A required estimated modulus is missing; run the estimator first."""


class InsufficientCoverageError(LqgailError):
    """Random sampling could not collect enough admissible points."""


class EstimatorRejectionError(LqgailError):
    """Too many perturbations were rejected; stability margin too small."""

    def __init__(self, message, rejection_rate=None):
        super().__init__(message)
        self.rejection_rate = rejection_rate


class ConfigError(LqgailError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
