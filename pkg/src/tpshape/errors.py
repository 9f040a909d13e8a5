"""Exception hierarchy.

Numerical failures map to CLI exit code 3, configuration problems to 2 and
file problems to 4 (see ``tpshape.cli``).
"""


class TpshapeError(Exception):
    """Base class for all package errors."""


class ConfigError(TpshapeError, ValueError):
    pass


class NumericalError(TpshapeError):
    pass


class FormatError(TpshapeError):
    """A persisted file has a bad magic, version or truncated payload."""


class UndersampledGrid(NumericalError):
    pass


class TruncatedState(NumericalError):
    pass


class InfiniteWidth(NumericalError):
    pass


class DecompositionFailure(NumericalError):
    pass


class ZeroIntensity(NumericalError):
    pass


class CorrelationTooFine(NumericalError):
    pass


class GridMismatch(NumericalError):
    pass


class EmptyRegion(NumericalError):
    pass


class ZeroMean(NumericalError):
    pass


class ProbeFailure(NumericalError):
    pass


class BasisSizeMismatch(NumericalError):
    pass


class TargetOutOfRange(NumericalError, IndexError):
    pass


class EmptyTargets(NumericalError):
    pass


class RegionOutOfRange(NumericalError, IndexError):
    pass


class DegenerateBackground(NumericalError):
    pass


class InvalidDetectorParams(NumericalError, ValueError):
    pass


class TooFewFrames(NumericalError):
    pass
