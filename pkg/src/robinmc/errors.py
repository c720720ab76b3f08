"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """A precondition of an operation was not met by the caller."""


class NormalUndefined(ContractViolation):
    """The inward normal does not exist at the point (box edge or corner)."""


class AsymmetricCoefficient(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class EllipticityViolation(ValueError):
    pass


class DegenerateGeometry(RuntimeError):
    pass


class PropagatedNaN(FloatingPointError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class InsufficientBoundaryGrid(ValueError):
    pass


class SolverStalled(RuntimeError):
    pass


class CalibrationBracketFailure(RuntimeError):
    pass


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
