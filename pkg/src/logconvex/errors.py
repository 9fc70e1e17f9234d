"""Exception hierarchy shared by all modules."""


class LogConvexError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(LogConvexError, ValueError):
    """Invalid or inconsistent set-up (grids, mode counts, config files)."""


class HypothesisViolation(LogConvexError):
    """Problem data violates a structural assumption (ellipticity, monotonicity, bounded psi_r)."""


class NumericalError(LogConvexError, ArithmeticError):
    """A solver failed: blow-up, loss of positivity, singular solve.

    ``step`` holds the time-step index at which the failure was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class DegenerateStateError(LogConvexError):
    """The tracked difference has vanished; quotients are undefined."""


class ConditioningError(NumericalError):
    """Normal equations too ill-conditioned; ``suggested_reg`` is a workable Tikhonov weight."""

    def __init__(self, message, suggested_reg):
        super().__init__(f"{message}; try reg >= {suggested_reg:.3g}")
        self.suggested_reg = suggested_reg
