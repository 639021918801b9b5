"""Adjoint-source construction: the plain least-squares residual d - u, or
the registration-guided residual built from fractionally warped data
(the prediction transported a small fraction alpha of the way toward the
observation along fitted warps).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .registration import SweepSchedule, _check_gathers_aligned, register_gather
from .spline_warp import apply_warp
from .wave_solver import ShotGather

__all__ = ["AdjointSourceSpec", "ls_residual", "rgls_residual"]

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class AdjointSourceSpec:
    """How to turn (observed, predicted) gathers into an adjoint source.

    mode 'ls' uses d - u directly; mode 'rgls' registers the prediction to
    the observation and uses d_tilde - u, where
    d_tilde(t) = A(t)^alpha * u((1-alpha) t + alpha p(t)).
    """

    mode: str = "rgls"
    alpha: float = DEFAULT_ALPHA
    sched: SweepSchedule | None = None
    lfa_kind: str = "hilbert_sum"
    stride: int = 50
    n_intervals: int = 4

    def __post_init__(self):
        if self.mode not in ("ls", "rgls"):
            raise ValueError(f"mode must be 'ls' or 'rgls', got {self.mode!r}")
        if self.mode == "rgls":
            if not 0.0 < self.alpha <= 1.0:
                raise ValueError(f"alpha must be in (0, 1] for rgls, got {self.alpha}")
            if self.sched is None:
                raise ValueError("rgls mode needs a SweepSchedule")


def ls_residual(obs: ShotGather, pred: ShotGather) -> ShotGather:
    """Per-trace difference observed - predicted."""
    _check_gathers_aligned(obs, pred)
    return pred.with_data(obs.data - pred.data)


def rgls_residual(obs: ShotGather, pred: ShotGather, spec: AdjointSourceSpec):
    """Registration-guided residual d_tilde - u plus the fitted warps.

    Every stride-th trace pair is registered (the rest interpolated); the
    trace pairs are jointly rescaled by the gather RMS before registration so
    the warp penalty weight keeps a data-independent meaning. A receiver
    whose warp comes back non-finite falls back to the plain LS residual for
    that trace (logged).
    """
    _check_gathers_aligned(obs, pred)
    scale = max(np.sqrt(np.mean(obs.data**2)), np.sqrt(np.mean(pred.data**2)), 1e-300)
    obs_n = obs.with_data(obs.data / scale)
    pred_n = pred.with_data(pred.data / scale)
    warps = register_gather(obs_n, pred_n, spec.sched, spec.lfa_kind,
                            stride=spec.stride, n_intervals=spec.n_intervals)

    residual = np.empty_like(pred.data)
    for i, w in enumerate(warps):
        u_i = pred.trace(i)
        if not (np.all(np.isfinite(w.rho)) and np.all(np.isfinite(w.amp))):
            log.warning("receiver %d: registration produced non-finite warp; using LS residual", i)
            residual[i] = obs.data[i] - pred.data[i]
            continue
        d_tilde = apply_warp(u_i, w, spec.alpha)
        residual[i] = d_tilde.samples - u_i.samples
    return pred.with_data(residual), warps
