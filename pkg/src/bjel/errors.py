"""Exception types raised across the package."""


class BJELError(Exception):
    """Base class for all package errors."""


class InvalidInput(BJELError, ValueError):
    pass


class SampleTooSmall(BJELError, ValueError):
    pass


class InfeasibleTheta(BJELError):
    """Target lies outside the open convex hull of the constraint points."""


class NonConvergence(BJELError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularSystem(BJELError, ArithmeticError):
    pass


class SizeMeasureTooLarge(BJELError, ValueError):
    pass


class RejectionBudgetExceeded(BJELError, RuntimeError):
    pass


class NonPositiveWeight(BJELError, ValueError):
    pass


class SingularCalibration(BJELError, ArithmeticError):
    pass


class NegativeCalibratedWeight(UserWarning):
    """Chi-square calibration produced at least one negative weight."""


class DegenerateVariance(BJELError, ArithmeticError):
    pass


class DegeneratePosterior(BJELError):
    pass


class RhoUnattainable(BJELError, ValueError):
    pass
