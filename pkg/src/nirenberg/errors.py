"""Exception hierarchy shared by all modules."""


class NirenbergError(Exception):
    """Base class for every error raised by this package."""


class InvalidBandLimit(NirenbergError):
    pass


class BandLimitMismatch(NirenbergError):
    pass


class ResolutionExceeded(NirenbergError):
    """A field (or a pulled-back field) is not resolved at the working band limit."""

    def __init__(self, message, tail_ratio=None):
        super().__init__(message)
        self.tail_ratio = tail_ratio


class SliceProjectionFailed(NirenbergError):
    def __init__(self, message, moment_norm=None):
        super().__init__(message)
        self.moment_norm = moment_norm


class NonpositiveMass(NirenbergError):
    """The total weighted curvature  int K e^{2u}  is not positive."""


class NotInCPlus(NirenbergError):
    """K is nowhere positive, so it cannot be a Gauss curvature on S^2."""


class NotInvariant(NirenbergError):
    pass


class NotASolution(NirenbergError):
    pass


class NotASingularPoint(NirenbergError):
    pass


class ConstantInput(NirenbergError):
    pass


class UndefinedDegree(NirenbergError):
    pass


class InternalInconsistency(NirenbergError):
    pass


class ClassificationFailed(NirenbergError):
    pass


class ZeroInput(NirenbergError):
    pass


class FieldFormatError(NirenbergError):
    pass
