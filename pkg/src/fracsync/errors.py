"""Exception types shared across the package."""


class ContractViolationError(ValueError):
    """An operation was called with inputs violating its stated preconditions."""


class FbmGenerationError(RuntimeError):
    """Both sampling routes (circulant embedding and Cholesky) failed."""


class IntegrationBlowupError(RuntimeError):
    """The state left the admissible region (norm above the blow-up cap)."""

    def __init__(self, t_last: float, message: str | None = None):
        self.t_last = t_last
        super().__init__(message or f"state blew up; last finite time t={t_last:g}")


class EstimationError(RuntimeError):
    """An ensemble estimate could not be formed (e.g. too many aborted runs)."""


class RescaleFailureError(RuntimeError):
    """Two-trajectory separation collapsed below the resolvable floor."""
