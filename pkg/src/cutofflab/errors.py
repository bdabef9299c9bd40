"""Exception hierarchy shared by all cutofflab modules."""


class CutoffLabError(Exception):
    """Base class for every error raised by this package."""


class DegenerateStartError(CutoffLabError, ValueError):
    """The law at t <= 0 is a point mass; entropy-type functionals diverge."""


class QuadratureError(CutoffLabError, ArithmeticError):
    """Numerical integration did not reach the requested accuracy."""

    def __init__(self, message, estimate):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


class MonotonicityError(CutoffLabError, ValueError):
    """A curve assumed nonincreasing was observed to increase."""


class BracketError(CutoffLabError, ValueError):
    """A threshold is not crossed inside the sampled or searched range."""


class ConvexityError(CutoffLabError, ValueError):
    """A potential violates its claimed curvature lower bound."""


class TruncationError(CutoffLabError, ValueError):
    """Too much invariant mass lies outside the computational domain."""


class SolverError(CutoffLabError, RuntimeError):
    """Time stepping or eigen-solving failed (instability, mass drift, no convergence)."""


class ConfigError(CutoffLabError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
