"""Exception hierarchy shared by all modules."""


class MiocrlError(Exception):
    """Base class for package errors."""


class ParseError(MiocrlError):
    pass


class ValidationError(MiocrlError, ValueError):
    pass


class ConfigError(MiocrlError, ValueError):
    pass


class FormatError(MiocrlError):
    """Checkpoint or report file has the wrong format or version."""


class ShapeMismatch(MiocrlError, ValueError):
    pass


class PowerInfeasible(MiocrlError):
    """Battery cannot deliver the demanded power (negative discriminant)."""

    def __init__(self, power, limit):
        super().__init__(f"battery power {power:.1f} W exceeds limit {limit:.1f} W")
        self.power = power
        self.limit = limit


class EpisodeOver(MiocrlError):
    pass


class NoFeasiblePath(MiocrlError):
    def __init__(self, message, dead_step=None):
        super().__init__(message)
        self.dead_step = dead_step


class InfeasibleRollout(MiocrlError):
    pass


class TooLarge(MiocrlError):
    pass


class DegenerateFit(MiocrlError):
    pass
