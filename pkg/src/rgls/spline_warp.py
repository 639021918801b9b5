"""Piecewise-cubic warp p(t) and amplitude A(t): cardinal cubic Hermite basis
with Catmull-Rom slopes, evaluation with derivatives, and application of a
fractional warp to a trace via 4-point cubic interpolation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal_core import Trace

__all__ = [
    "AMP_FLOOR",
    "SplineBasis",
    "WarpModel",
    "basis_eval",
    "sample_trace",
    "apply_warp",
]

log = logging.getLogger(__name__)

# A(t) is clamped to this floor before the fractional power [A]^alpha so the
# power stays real; clamping is logged.
AMP_FLOOR = 0.01


@dataclass(frozen=True)
class SplineBasis:
    """Cardinal cubic-Hermite basis on fixed nodes.

    The k-th basis function interpolates the unit nodal vector e_k with
    Catmull-Rom slopes (centered differences of nodal values, one-sided at the
    ends), so nodal values are the spline coefficients and the basis is a
    partition of unity.
    """

    node_times: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.node_times, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least 2 node times")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("node times must be strictly increasing")
        object.__setattr__(self, "node_times", nodes)

    @classmethod
    def over(cls, t_start: float, t_end: float, n_intervals: int = 4) -> "SplineBasis":
        """Equal-length subintervals spanning [t_start, t_end]."""
        if n_intervals < 1:
            raise ValueError("n_intervals must be >= 1")
        return cls(np.linspace(t_start, t_end, n_intervals + 1))

    @property
    def n_nodes(self) -> int:
        return self.node_times.size

    @property
    def n_intervals(self) -> int:
        return self.node_times.size - 1

    def _slopes(self, values: np.ndarray) -> np.ndarray:
        """Catmull-Rom nodal slopes of an interpolant through `values`."""
        t = self.node_times
        m = np.empty_like(values)
        if values.size == 2:
            m[:] = (values[1] - values[0]) / (t[1] - t[0])
            return m
        m[1:-1] = (values[2:] - values[:-2]) / (t[2:] - t[:-2])
        m[0] = (values[1] - values[0]) / (t[1] - t[0])
        m[-1] = (values[-1] - values[-2]) / (t[-1] - t[-2])
        return m

    def interpolate(self, values, t):
        """Evaluate the interpolant through nodal `values` and its t-derivative.

        Out-of-domain t are clamped to the domain endpoints. Returns (y, dy).
        """
        values = np.asarray(values, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        nodes = self.node_times
        tc = np.clip(t, nodes[0], nodes[-1])
        k = np.clip(np.searchsorted(nodes, tc, side="right") - 1, 0, nodes.size - 2)
        h = nodes[k + 1] - nodes[k]
        s = (tc - nodes[k]) / h
        m = self._slopes(values)

        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        y = h00 * values[k] + h10 * h * m[k] + h01 * values[k + 1] + h11 * h * m[k + 1]

        d00 = (6 * s2 - 6 * s) / h
        d10 = 3 * s2 - 4 * s + 1
        d01 = (-6 * s2 + 6 * s) / h
        d11 = 3 * s2 - 2 * s
        dy = d00 * values[k] + d10 * m[k] + d01 * values[k + 1] + d11 * m[k + 1]
        return y, dy

    def matrix(self, t) -> np.ndarray:
        """Collocation matrix B with B[i, k] = phi_k(t_i)."""
        t = np.asarray(t, dtype=np.float64)
        out = np.empty((t.size, self.n_nodes))
        unit = np.zeros(self.n_nodes)
        for k in range(self.n_nodes):
            unit[k] = 1.0
            out[:, k], _ = self.interpolate(unit, t)
            unit[k] = 0.0
        return out


def basis_eval(basis: SplineBasis, k: int, t):
    """Value of the k-th cardinal basis function at t (phi_k(node_j) = delta_kj)."""
    if not 0 <= k < basis.n_nodes:
        raise ValueError(f"basis index {k} out of range 0..{basis.n_nodes - 1}")
    unit = np.zeros(basis.n_nodes)
    unit[k] = 1.0
    y, _ = basis.interpolate(unit, t)
    return y


@dataclass(frozen=True)
class WarpModel:
    """Warp p(t) = sum_k rho_k phi_k(t) and amplitude A(t) = sum_k amp_k phi_k(t).

    With a cardinal basis the coefficient vectors rho and amp are exactly the
    nodal values of p and A.
    """

    basis: SplineBasis
    rho: np.ndarray
    amp: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        amp = np.asarray(self.amp, dtype=np.float64)
        if rho.shape != (self.basis.n_nodes,) or amp.shape != (self.basis.n_nodes,):
            raise ValueError("rho and amp must have one value per basis node")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def identity(cls, basis: SplineBasis) -> "WarpModel":
        """p(t) = t, A(t) = 1."""
        return cls(basis, basis.node_times.copy(), np.ones(basis.n_nodes))

    def eval(self, t):
        """Return (p, A, dp/dt, dA/dt) at times t."""
        p, dp = self.basis.interpolate(self.rho, t)
        a, da = self.basis.interpolate(self.amp, t)
        return p, a, dp, da

    def min_warp_slope(self, oversample: int = 20) -> float:
        """Minimum of p'(t) on a dense grid; <= 0 indicates folding."""
        nodes = self.basis.node_times
        dense = np.linspace(nodes[0], nodes[-1], oversample * self.basis.n_intervals + 1)
        _, dp = self.basis.interpolate(self.rho, dense)
        return float(dp.min())

    def to_json(self) -> str:
        return json.dumps(
            {
                "node_times": self.basis.node_times.tolist(),
                "rho": self.rho.tolist(),
                "amp": self.amp.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "WarpModel":
        obj = json.loads(text)
        return cls(SplineBasis(np.asarray(obj["node_times"])), np.asarray(obj["rho"]), np.asarray(obj["amp"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "WarpModel":
        return cls.from_json(Path(path).read_text())


def sample_trace(u: Trace, times) -> np.ndarray:
    """Sample a trace at arbitrary times by 4-point cubic convolution
    (Keys kernel, a = -1/2). Times outside [t0, t_end] read as zero, and
    missing neighbors at the ends are treated as zero.
    """
    return sample_trace_with_derivatives(u, times, order=0)[0]


def sample_trace_with_derivatives(u: Trace, times, order: int = 2):
    """Cubic-convolution interpolation of a trace plus the exact first and
    second derivatives of the interpolant (so analytic derivatives of any
    functional built on the interpolated values match finite differences).

    Returns (value, d1, d2); entries beyond `order` are None. The interpolant
    is C1, so d2 is its piecewise-linear second derivative.
    """
    times = np.asarray(times, dtype=np.float64)
    x = (times - u.t0) / u.dt
    inside = (x >= 0.0) & (x <= u.n - 1)
    xi = np.floor(x).astype(np.int64)
    f = x - xi

    s = u.samples
    f2 = f * f
    f3 = f2 * f
    w_val = (
        0.5 * (-f3 + 2 * f2 - f),
        0.5 * (3 * f3 - 5 * f2 + 2),
        0.5 * (-3 * f3 + 4 * f2 + f),
        0.5 * (f3 - f2),
    )
    w_d1 = w_d2 = None
    if order >= 1:
        w_d1 = (
            0.5 * (-3 * f2 + 4 * f - 1),
            0.5 * (9 * f2 - 10 * f),
            0.5 * (-9 * f2 + 8 * f + 1),
            0.5 * (3 * f2 - 2 * f),
        )
    if order >= 2:
        w_d2 = (
            0.5 * (-6 * f + 4),
            0.5 * (18 * f - 10),
            0.5 * (-18 * f + 8),
            0.5 * (6 * f - 2),
        )

    val = np.zeros_like(x)
    d1 = np.zeros_like(x) if order >= 1 else None
    d2 = np.zeros_like(x) if order >= 2 else None
    for k, tap in enumerate((-1, 0, 1, 2)):
        idx = xi + tap
        valid = inside & (idx >= 0) & (idx < u.n)
        sv = s[idx[valid]]
        val[valid] += w_val[k][valid] * sv
        if order >= 1:
            d1[valid] += w_d1[k][valid] * sv
        if order >= 2:
            d2[valid] += w_d2[k][valid] * sv
    if order >= 1:
        d1 /= u.dt
    if order >= 2:
        d2 /= u.dt**2
    return val, d1, d2


def apply_warp(u: Trace, w: WarpModel, alpha: float) -> Trace:
    """Fractionally warped trace [A(t)]^alpha * u((1-alpha) t + alpha p(t)).

    alpha = 0 returns u itself; alpha = 1 applies the full warp. A(t) is
    clamped to AMP_FLOOR before the power (clamp logged at warning level).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    t = u.times
    p, a, _, _ = w.eval(t)
    if np.any(a < AMP_FLOOR):
        log.warning(
            "amplitude clamped to %g at %d of %d samples", AMP_FLOOR, int(np.sum(a < AMP_FLOOR)), t.size
        )
        a = np.maximum(a, AMP_FLOOR)
    warped_times = (1.0 - alpha) * t + alpha * p
    return u.with_samples(a**alpha * sample_trace(u, warped_times))
