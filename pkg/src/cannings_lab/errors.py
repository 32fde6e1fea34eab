"""Exception hierarchy shared by every module of the package."""


class CanningsError(Exception):
    """Base class for all errors raised by cannings_lab."""


class ProfileError(CanningsError, ValueError):
    pass


class NonMonotonePositions(ProfileError):
    pass


class NegativeValue(ProfileError):
    pass


class InteriorZero(ProfileError):
    pass


class SigmaZeroInside(ProfileError):
    pass


class LawProfileMismatch(CanningsError, ValueError):
    pass


class InfeasibleEvent(CanningsError, ValueError):
    pass


class InfeasibleCount(CanningsError, ValueError):
    pass


class KTooLarge(CanningsError, ValueError):
    pass


class DeltaOutOfRange(CanningsError, ValueError):
    pass


class HeightOutOfRange(CanningsError, ValueError):
    pass


class TooFewSamples(CanningsError, ValueError):
    pass


class ConfigError(CanningsError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
