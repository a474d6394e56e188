"""Exception types raised across the package."""

import numpy as np


class CriticLandscapeError(Exception):
    """Base class for all package errors."""


class DivergenceError(CriticLandscapeError):
    """A simulation or weight update produced non-finite numbers."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = None if state is None else np.array(state, dtype=float)


class SingularityError(CriticLandscapeError):
    """Euler-angle kinematics evaluated too close to the pitch singularity."""


class RankError(CriticLandscapeError):
    """A weight trajectory does not span two independent directions."""


class DegeneracyError(CriticLandscapeError):
    """A loss surface has zero interquartile range."""


class BoundsError(CriticLandscapeError):
    """A sampling radius reaches outside the evaluated grid."""


class FitError(CriticLandscapeError):
    """The local quadratic fit is rank deficient or underdetermined."""


class ConfigError(CriticLandscapeError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
