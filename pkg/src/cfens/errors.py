"""Exception types raised across the package.

Every error carries a short machine-readable ``kind`` (the class name) so the
CLI can print a single parsable line and exit with status 1.
"""


class CfensError(Exception):
    """Base class for all package errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class OutOfBounds(CfensError):
    pass


class EmptyContext(CfensError):
    pass


class InsufficientData(CfensError):
    pass


class DegenerateBasis(CfensError):
    pass


class NonFiniteLoss(CfensError):
    """Raised when an objective evaluates to NaN/inf, usually a divergent learning rate.

    The partial optimization trace is attached as ``trace`` for diagnosis.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptySequence(CfensError):
    pass


class EmptyEnsemble(CfensError):
    pass


class EmptySampleSet(CfensError):
    pass


class NoGroundTruth(CfensError):
    pass


class NoAnomalies(CfensError):
    pass


class ParseError(CfensError):
    pass


class NonFiniteValue(CfensError):
    pass


class TooShort(CfensError):
    pass


class SpecInfeasible(CfensError):
    pass


class MissingLabels(CfensError):
    pass


class TooManyDims(CfensError):
    pass


class ConfigError(CfensError):
    pass
