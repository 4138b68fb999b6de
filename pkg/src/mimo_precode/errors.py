"""Exception hierarchy shared by the kernels, precoders and simulator."""

import numpy as np


class PrecodingError(np.linalg.LinAlgError):
    """Base class for every numerical failure raised by this package."""


class RankDeficient(PrecodingError):
    pass


class Singular(PrecodingError):
    pass


class NotPositiveDefinite(PrecodingError):
    pass


class NoConvergence(PrecodingError):
    pass


class DimensionalityViolation(PrecodingError, ValueError):
    """Some user's interference channel fills the transmit space (N_T <= rank)."""


class InvalidDelta(PrecodingError, ValueError):
    pass


class AllZeroChannels(PrecodingError, ValueError):
    pass


class DivisionByZero(PrecodingError, ZeroDivisionError):
    pass
