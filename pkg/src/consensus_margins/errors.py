"""Exception hierarchy shared by all modules."""


class MarginError(Exception):
    """Base class for every error raised by this package."""


class NonSquareError(MarginError, ValueError):
    pass


class NegativeWeightError(MarginError, ValueError):
    pass


class NonzeroDiagonalError(MarginError, ValueError):
    pass


class DimensionMismatchError(MarginError, ValueError):
    pass


class NoStabilizingGainError(MarginError):
    pass


class AssumptionViolationError(MarginError):
    """Raised when the network does not satisfy the standing assumptions.

    ``failing_loops`` lists the loop indices p whose closed loop is not Hurwitz.
    """

    def __init__(self, message, failing_loops=()):
        super().__init__(message)
        self.failing_loops = tuple(failing_loops)


class NearPoleError(MarginError):
    pass


class GridTooCoarseError(MarginError):
    pass


class InfeasibleError(MarginError):
    pass


class NoCertifiedGlobalError(MarginError):
    pass


class UnsupportedDimensionError(MarginError, ValueError):
    pass


class SingularInputError(MarginError, ValueError):
    pass


class NonUnitaryBasisError(MarginError, ValueError):
    pass


class InnerProductNotPositiveError(MarginError, ValueError):
    pass


class InnerProductNotRealError(MarginError, ValueError):
    pass


class NotPositiveDefiniteError(MarginError, ValueError):
    pass


class StepTooLargeError(MarginError, ValueError):
    pass


class HorizonTooShortError(MarginError, ValueError):
    pass


class ConfigParseError(MarginError, ValueError):
    pass
