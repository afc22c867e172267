"""Exception types raised across the package."""


class MazpotError(Exception):
    """Base class for all package errors."""


class BadParams(MazpotError, ValueError):
    pass


class ResolutionTooCoarse(MazpotError, ValueError):
    pass


class InvalidCell(MazpotError, ValueError):
    pass


class NotRefinable(MazpotError):
    pass


class Disconnected(MazpotError):
    pass


class RadiusTooSmall(MazpotError, ValueError):
    pass


class EmptySet(MazpotError, ValueError):
    pass


class BadInput(MazpotError, ValueError):
    pass


class BrokenPath(MazpotError, ValueError):
    pass


class BadExponent(MazpotError, ValueError):
    pass


class InfeasibleTarget(MazpotError, ValueError):
    pass


class NoBoundary(MazpotError):
    pass


class KEmpty(MazpotError):
    pass


class BoxNotInterior(MazpotError, ValueError):
    pass


class CertificateMissing(MazpotError):
    pass


class NotNested(MazpotError, ValueError):
    pass


class UnstableAmbient(MazpotError):
    pass


class UnknownExample(MazpotError, KeyError):
    pass
