"""Exception types raised across the package."""


class ArtifactError(Exception):
    """Base class for all package errors."""


class EquilibriumViolation(ArtifactError):
    """No valid linear equilibrium: the feedback term exceeds base price impact."""


class DivergentCoupling(ArtifactError):
    """Coupling r >= 1, so the reflexive multiplier does not exist."""


class GridTooCoarse(ArtifactError):
    """A sweep step skipped a fold (root count jumped by more than two)."""


class NumericalBlowup(ArtifactError):
    """A simulation left the overflow guard."""


class InsufficientTail(ArtifactError):
    """The requested tail holds no observations."""


class EmptyRegime(ArtifactError):
    """A stress or calm regime holds no periods."""


class WindowTooLong(ArtifactError):
    """Rolling window is longer than the series."""


class ConfigError(ArtifactError):
    """A configuration value violates its bound."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownKey(ConfigError):
    """Configuration file names a field that does not exist."""

    def __init__(self, field):
        super().__init__(field, "unknown configuration key")
