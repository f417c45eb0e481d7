"""Wiener-chaos moments, noise synthesis and Hölder-regularity checks for
the parabolic Anderson model driven by Riesz-type space-time Gaussian noise.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, MemoryBudgetError, PamError, QuadratureError,  # noqa: F401
                     SeriesTruncationError, UnsupportedError)
from .spectral_models import (QuadratureSpec, SpatialSpectralModel,  # noqa: F401
                              TemporalCovarianceModel)
