"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class SeriesNotConverged(ArithmeticError):
    """A truncated series hit its term cap before meeting the tolerance."""


class SingularFim(ArithmeticError):
    """The Fisher information matrix cannot be inverted (unlocalizable geometry)."""


class QuadratureFailure(ArithmeticError):
    """Numerical integration did not reach the requested tolerance."""


class Infeasible(ValueError):
    """No operating point satisfies the backhaul constraint."""


class IllConditioned(ArithmeticError):
    """A zero-forcing Gram matrix is too ill-conditioned to invert."""


class ConfigError(ValueError):
    """Experiment configuration failed to parse or validate."""
