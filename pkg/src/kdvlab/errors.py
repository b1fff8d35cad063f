"""Exception types raised across kdvlab."""


class KdvLabError(Exception):
    """Base class for all library errors."""


class NonZeroMean(KdvLabError, ValueError):
    """Field mean exceeds the mean-zero tolerance."""


class WeightOverflow(KdvLabError, OverflowError):
    """An exponential weight left the representable float range."""


class IllConditioned(KdvLabError, ArithmeticError):
    """A determinant lost all significant digits."""


class BadModeCount(KdvLabError, ValueError):
    pass


class DegenerateWeights(KdvLabError, ValueError):
    """Importance weights collapsed (effective sample size too small)."""


class TooShort(KdvLabError, ValueError):
    pass


class NoConvergence(KdvLabError, RuntimeError):
    """Implicit solve did not converge within the iteration budget."""


class StepTooLarge(KdvLabError, RuntimeError):
    """Time step violated the per-step invariant drift bound."""


class TooFewSamples(KdvLabError, ValueError):
    pass


class GridMismatch(KdvLabError, ValueError):
    pass


class ConfigInvalid(KdvLabError, ValueError):
    pass


class IoFailure(KdvLabError, OSError):
    pass
