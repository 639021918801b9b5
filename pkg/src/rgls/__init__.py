"""Registration-guided least-squares (RGLS) full-waveform inversion toolkit.

2D acoustic modeling, seismogram registration via piecewise-cubic warps,
fractionally warped adjoint sources, and LS/RGLS velocity inversion on
synthetic transmission experiments.
"""

from .signal_core import FrequencyBand, Spectrum, Trace, ricker
from .spline_warp import SplineBasis, WarpModel, apply_warp
from .wave_solver import PmlConfig, ShotGather, SourceTerm, VelocityModel

__all__ = [
    "Trace",
    "Spectrum",
    "FrequencyBand",
    "ricker",
    "SplineBasis",
    "WarpModel",
    "apply_warp",
    "VelocityModel",
    "SourceTerm",
    "ShotGather",
    "PmlConfig",
]

__version__ = "0.1.0"
