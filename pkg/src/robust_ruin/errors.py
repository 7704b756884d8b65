"""Exception hierarchy shared by the solver modules."""


class RobustRuinError(Exception):
    """Base class for all package errors."""


class ParameterError(RobustRuinError, ValueError):
    """A model parameter violates a standing assumption.

    Attributes
    ----------
    field : str
        Name of the offending parameter.
    """

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


class NonConvergence(RobustRuinError):
    """Newton iteration hit ``max_iter`` before reaching the tolerance."""

    def __init__(self, message: str, iterations: int = 0, last_residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.last_residual = last_residual


class ConvexityLoss(RobustRuinError):
    """The discrete Cole-Hopf transform lost convexity (grid too coarse)."""


class DegenerateDenominator(RobustRuinError):
    """``eps * psi'**2 + psi''`` is not positive at an interior node."""


class InconsistentConcavity(RobustRuinError):
    """More than one concavity change detected in a discrete value function."""


class InadmissiblePolicy(RobustRuinError):
    """Fixed-policy evaluation left the unit interval."""
