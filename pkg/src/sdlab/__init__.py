"""sdlab: a numerical laboratory for abnormal central limit behavior.

Planar billiards whose return-time tails decay like 1/n^2 sit exactly at
the boundary where the classical CLT fails: Birkhoff sums grow like
sqrt(n log n) instead of sqrt(n), with an explicitly computable diffusion
constant.  This package provides

* exact billiard dynamics for three table families (stadium, drivebelt,
  rectangular Lorentz gas) in collision coordinates,
* the induced (first-return) map on the ergodic-average-dominating region
  together with return-time statistics,
* Markov spreading chains that reproduce the 1/n^2 transition structure
  in isolation, with exact stationary laws,
* the truncation/martingale decomposition underlying the abnormal CLT,
  with its summability diagnostics,
* closed-form diffusion constants for the table families plus a cusp
  family, and
* a command line front end for the standard experiments.

Hot kernels are numba-compiled; ``SDLAB_DISABLE_NUMBA=1`` selects a pure
NumPy/python fallback with identical output.
"""

from ._accel import FORCE_FALLBACK, HAVE_NUMBA
from .errors import (
    ConfigError,
    CornerError,
    IterationCapError,
    SdlabError,
    TangencyError,
)

__version__ = "0.1.0"

__all__ = [
    "FORCE_FALLBACK",
    "HAVE_NUMBA",
    "SdlabError",
    "ConfigError",
    "TangencyError",
    "CornerError",
    "IterationCapError",
    "__version__",
]
