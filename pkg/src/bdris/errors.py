"""Exception types raised across the package."""


class BDRISError(Exception):
    """Base class for all package errors."""


class DomainError(BDRISError, ValueError):
    """An argument lies outside the domain of a formula."""


class ContractError(BDRISError, ValueError):
    """Inputs violate a precondition (shapes, norms, symmetry)."""


class SingularityError(BDRISError, ArithmeticError):
    """A circuit quantity is singular; ``ports`` names the offending entry."""

    def __init__(self, message, ports=None):
        super().__init__(message)
        self.ports = ports


class RealizabilityError(BDRISError, ValueError):
    """A target admittance cannot be produced by the circuit model."""

    def __init__(self, message, ports=None):
        super().__init__(message)
        self.ports = ports


class OptimizationError(BDRISError, RuntimeError):
    """The optimizer could not produce a usable point."""


class ExperimentError(BDRISError, RuntimeError):
    """An experiment could not be completed."""
