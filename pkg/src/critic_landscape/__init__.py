"""ADHDP actor-critic training and critic loss-landscape analysis.

Modules: :mod:`env` (cart-pole and spacecraft plants), :mod:`net` (MLPs and
closed-form gradients), :mod:`adhdp` (online training), :mod:`landscape`
(projection planes and match-loss grids), :mod:`metrics` (landscape indices
and the performance index), :mod:`config`, :mod:`rundir` and :mod:`cli`.
"""

from .exceptions import (BoundsError, ConfigError, CriticLandscapeError, DegeneracyError,
                         DivergenceError, FitError, RankError, SingularityError)

__version__ = "0.1.0"

__all__ = ["BoundsError", "ConfigError", "CriticLandscapeError", "DegeneracyError", "DivergenceError",
           "FitError", "RankError", "SingularityError", "__version__"]
