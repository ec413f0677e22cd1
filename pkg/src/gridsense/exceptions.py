"""Exception hierarchy for gridsense."""


class GridsenseError(Exception):
    """Base class for all gridsense errors."""


class CaseFormatError(GridsenseError):
    """Raised when a case file is malformed or fails validation."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class PowerFlowError(GridsenseError):
    """Raised when a power-flow problem is ill-posed."""


class PowerFlowDivergenceError(PowerFlowError):
    """Raised when Newton-Raphson fails to converge.

    Attributes
    ----------
    mismatch : float
        Infinity norm of the final power mismatch, in per unit.
    iterations : int
        Number of iterations performed before giving up.
    """

    def __init__(self, mismatch: float, iterations: int):
        super().__init__(
            f"power flow did not converge after {iterations} iterations "
            f"(final mismatch {mismatch:.3e} p.u.)"
        )
        self.mismatch = mismatch
        self.iterations = iterations


class AttackError(GridsenseError):
    """Raised when an attack cannot be generated for the given frame/config."""


class UnobservableError(GridsenseError):
    """Raised when the WLS estimator's gain matrix is singular (unobservable system)."""


class EvaluationError(GridsenseError):
    """Raised when a fitness or metric evaluation cannot be carried out."""


class ConfigError(GridsenseError):
    """Raised for invalid configuration files or parameter combinations."""
