"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by wae_lab."""


class RejectionBudgetExceeded(LabError):
    """Rejection sampler used up its proposal budget (support/floor mis-specified)."""


class NonFiniteError(LabError, ValueError):
    """A map, loss or estimate produced NaN or infinity."""


class DimensionMismatchError(LabError, ValueError):
    pass


class LipschitzViolation(LabError):
    """Dual potentials break phi(x_i) - psi(y_j) <= c(x_i, y_j)."""

    def __init__(self, i: int, j: int, excess: float):
        self.i, self.j, self.excess = i, j, excess
        super().__init__(f"potential pair ({i}, {j}) exceeds the cost by {excess:.3e}")


class NumericalUnderflow(LabError):
    """Sinkhorn potentials degenerated; epsilon is too small for the cost scale."""


class SolverError(LabError):
    """Exact transport solver did not return an optimal plan."""


class QuadratureError(LabError):
    pass


class RootFindingError(LabError):
    pass


class DegenerateFitError(LabError, ValueError):
    pass


class TrainingDiverged(LabError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class NonMonotoneDecoder(LabError):
    pass


class ConfigError(LabError, ValueError):
    pass
