"""Numerical laboratory for SDEs driven by fractional Brownian motion.

The package simulates additive-noise SDEs dY = F(Y) dt + sigma dB^H, builds
the associated driving-noise algebra (shifts, concatenation, moving-average
transforms), and measures long-time statistics: top Lyapunov exponents,
two-point synchronization, pullback attractors and occupation times under
strong deterministic controls.
"""

__version__ = "0.1.0"

from .errors import (
    ContractViolationError,
    EstimationError,
    FbmGenerationError,
    IntegrationBlowupError,
    RescaleFailureError,
)
from .paths import Grid, NoisePath, PathKind

__all__ = [
    "ContractViolationError",
    "EstimationError",
    "FbmGenerationError",
    "Grid",
    "IntegrationBlowupError",
    "NoisePath",
    "PathKind",
    "RescaleFailureError",
    "__version__",
]
