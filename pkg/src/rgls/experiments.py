"""Scenario factories: lens velocity models, randomized-model noise field,
crosshole and nearly-complete acquisition geometries, registration trace
pairs (known synthetic warp, noisy traces, two-model traces), observed-survey
generation, and desk-scale rescaling.

At scale 1 the grids are 501x501 with dx = 5 m (domain 2500 m square);
scale s shrinks the domain and the shot/receiver counts while keeping dx and
the source frequency fixed, so points-per-wavelength and cycle-skipping
behavior stay comparable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .signal_core import Trace, ricker
from .spline_warp import sample_trace
from .registration import SweepSchedule
from .wave_solver import (
    AcquisitionGeometry,
    PmlConfig,
    ShotLayout,
    SourceTerm,
    VelocityModel,
    forward,
    stability_dt,
)

__all__ = [
    "CASE_IDS",
    "ScenarioSpec",
    "Scenario",
    "build_model",
    "build_initial_model",
    "build_geometry",
    "build_registration_pair",
    "layered_reflectivity_trace",
    "make_observed_survey",
    "build_scenario",
    "registration_schedule",
]

INVERSION_CASES = ("H1", "L1", "H2", "L2", "R3")
REGISTRATION_CASES = ("reg1", "reg2", "reg3")
CASE_IDS = INVERSION_CASES + REGISTRATION_CASES

# Lens models: background +/- 900 m/s Gaussian centered mid-domain,
# radius^2 scale 1e6 m^2 at scale 1.
_LENS = {"H": (5200.0, 900.0), "L": (5500.0, -900.0), "R": (5000.0, 900.0)}
_INITIAL_V = {"H1": 5100.0, "L1": 6000.0, "H2": 5100.0, "L2": 6000.0, "R3": 5100.0}

_BASE_N = 500          # intervals at scale 1 (501 grid points)
_DX = 5.0
_R3_KERNEL_CELLS = 10.0
_R3_FIELD_STD = 150.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Resolved identity of one synthetic experiment."""

    case_id: str
    scale: float = 1.0
    rng_seed: int = 3
    noise_sigma: float = 0.075
    f_center: float | None = None

    def __post_init__(self):
        if self.case_id not in CASE_IDS:
            raise ValueError(f"unknown case {self.case_id!r}; expected one of {CASE_IDS}")
        if not 0 < self.scale <= 1.0:
            raise ValueError("scale must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def _grid(scale: float):
    n = int(round(_BASE_N * scale)) + 1
    return n, _DX


def build_model(case_id: str, scale: float = 1.0, rng_seed: int = 3) -> VelocityModel:
    """True velocity model for an inversion case.

    The lens follows V(x,z) = base + amp * exp(-|(x,z)-c|^2 / r2), with
    c = (1250 s, 1250 s) m and r2 = 1e6 s^2 m^2. Case R adds a smoothed random
    field (Gaussian kernel convolved with unit-normal noise, rescaled to a
    150 m/s standard deviation).
    """
    if case_id not in INVERSION_CASES:
        raise ValueError(f"unknown inversion case {case_id!r}")
    base, amp = _LENS[case_id[0]]
    n, dx = _grid(scale)
    x = dx * np.arange(n)
    cx = cz = 1250.0 * scale
    r2 = 1.0e6 * scale**2
    dist2 = (x[:, None] - cx) ** 2 + (x[None, :] - cz) ** 2
    v = base + amp * np.exp(-dist2 / r2)
    if case_id == "R3":
        rng = np.random.default_rng(rng_seed)
        noise = gaussian_filter(rng.standard_normal((n, n)), sigma=_R3_KERNEL_CELLS, mode="nearest")
        noise *= _R3_FIELD_STD / noise.std()
        v = v + noise
    return VelocityModel(v, dx)


def build_initial_model(case_id: str, scale: float = 1.0) -> VelocityModel:
    """Constant starting model (no prior knowledge of the lens)."""
    if case_id not in INVERSION_CASES:
        raise ValueError(f"unknown inversion case {case_id!r}")
    n, dx = _grid(scale)
    return VelocityModel(np.full((n, n), _INITIAL_V[case_id]), dx)


def _count(base: int, scale: float) -> int:
    return max(1, math.ceil(base * scale))


def build_geometry(case_id: str, scale: float = 1.0) -> AcquisitionGeometry:
    """Acquisition layout.

    Crosshole (H1/L1): ceil(49 s) sources at x = 10 s, uniformly over
    z in [25 s, 2475 s]; ceil(499 s) receivers at x = 2490 s spanning
    z in [5 s, 2495 s].

    Nearly-complete (H2/L2/R3): ceil(49 s) sources per side (inset 10 s from
    the edge), each shot recording on ceil(250 s) receivers per opposite side
    (3 sides, inset 10 s, spanning [5 s, 2495 s]).
    """
    if case_id not in INVERSION_CASES:
        raise ValueError(f"unknown inversion case {case_id!r}")
    s = scale
    lo_src, hi_src = 25.0 * s, 2475.0 * s
    lo_rec, hi_rec = 5.0 * s, 2495.0 * s
    inset = 10.0 * s
    far = 2500.0 * s - inset

    if case_id in ("H1", "L1"):
        n_src = _count(49, s)
        n_rec = _count(499, s)
        rec_z = np.linspace(lo_rec, hi_rec, n_rec)
        receivers = np.column_stack([np.full(n_rec, far), rec_z])
        shots = [
            ShotLayout((inset, z), receivers)
            for z in np.linspace(lo_src, hi_src, n_src)
        ]
        return AcquisitionGeometry(tuple(shots), kind="crosshole")

    n_src = _count(49, s)
    n_rec_side = _count(250, s)
    span = np.linspace(lo_rec, hi_rec, n_rec_side)
    side_receivers = {
        "left": np.column_stack([np.full(n_rec_side, inset), span]),
        "right": np.column_stack([np.full(n_rec_side, far), span]),
        "top": np.column_stack([span, np.full(n_rec_side, inset)]),
        "bottom": np.column_stack([span, np.full(n_rec_side, far)]),
    }
    src_span = np.linspace(lo_src, hi_src, n_src)
    side_sources = {
        "left": [(inset, z) for z in src_span],
        "right": [(far, z) for z in src_span],
        "top": [(x, inset) for x in src_span],
        "bottom": [(x, far) for x in src_span],
    }
    shots = []
    for side in ("left", "right", "top", "bottom"):
        others = [s_ for s_ in ("left", "right", "top", "bottom") if s_ != side]
        receivers = np.vstack([side_receivers[o] for o in others])
        for pos in side_sources[side]:
            shots.append(ShotLayout(pos, receivers))
    return AcquisitionGeometry(tuple(shots), kind="nearly-complete")


# ---------------------------------------------------------------------------
# registration trace pairs


def layered_reflectivity_trace(dt: float = 1e-3, duration: float = 2.0, f_center: float = 15.0,
                               rng_seed: int = 3, depth_gradient: float = 0.0) -> Trace:
    """Multi-arrival synthetic standing in for a complex-model trace.

    Arrival times come from a 20-layer gradient-plus-layers model (primaries,
    surface multiples, and interbed multiples populate the whole record);
    amplitudes carry packet-scale modulation and a bounded coda decay so late
    arrivals keep usable signal. `depth_gradient` (1/s as velocity change per
    meter of depth) perturbs the layer velocities the way a bulk model error
    would, producing growing arrival-time lags along the coda.
    """
    rng = np.random.default_rng(rng_seed)
    n_layers = 20
    v = 1800.0 + np.cumsum(rng.uniform(40, 200, n_layers))
    h = rng.uniform(60, 130, n_layers)
    depth_top = np.concatenate([[0.0], np.cumsum(h[:-1])])
    v = v + depth_gradient * depth_top
    n = int(round(duration / dt)) + 1
    imp = np.zeros(n)
    t_two = 0.12
    times = []
    signs = []
    for i in range(n_layers - 1):
        t_two += 2 * h[i] / v[i]
        times.append(t_two)
        signs.append(1.0 if rng.random() < 0.7 else -1.0)
    prim = list(zip(times, signs))
    for (ta, sa) in prim:
        if 2 * ta < duration:
            times.append(2 * ta)
            signs.append(-0.8 * sa)
    for (ta, sa) in prim[:8]:
        for (tb, sb) in prim[:8]:
            tm = ta + tb + 0.013
            if tm < duration:
                times.append(tm)
                signs.append(-0.55 * sa * sb)
    for t_a, s_a in zip(times, signs):
        k = int(round(t_a / dt))
        if 0 <= k < n:
            mod = 1.0 + 0.7 * np.sin(2 * np.pi * 0.55 * t_a + 0.7)
            mag = 0.35 + 0.65 * rng.random()
            imp[k] += s_a * mag * mod * (0.4 + np.exp(-1.3 * t_a))
    wav = ricker(f_center, dt, 2.4 / f_center, 1.2 / f_center).samples
    tr = np.convolve(imp, wav)[:n]
    return Trace(tr / np.abs(tr).max(), dt)


def known_warp(t: np.ndarray, record_duration: float) -> np.ndarray:
    """The registration test warp p(t) = t + 0.15 exp(-8 (t/T_c - 1)^2),
    T_c = half the recording time."""
    t_c = 0.5 * record_duration
    return t + 0.15 * np.exp(-8.0 * (t / t_c - 1.0) ** 2)


def build_registration_pair(case_id: str, rng_seed: int = 3, noise_sigma: float = 0.075,
                            dt: float = 1e-3, duration: float = 2.0, f_center: float = 15.0):
    """Trace pairs for the registration examples.

    reg1: u from the layered model, d = u warped by the known map; dense truth.
    reg2: reg1 plus independent Gaussian noise on both traces; dense truth.
    reg3: traces from the layered model and a depth-gradient-perturbed copy
          (slower at depth, so the prediction lags increasingly in the coda);
          no truth.

    Returns (d, u, truth) with truth a dense p*(t) array or None.
    """
    if case_id not in REGISTRATION_CASES:
        raise ValueError(f"unknown registration case {case_id!r}")
    u = layered_reflectivity_trace(dt, duration, f_center, rng_seed)
    t = u.times
    if case_id in ("reg1", "reg2"):
        truth = known_warp(t, u.duration)
        d = u.with_samples(sample_trace(u, truth))
        if case_id == "reg2" and noise_sigma > 0:
            rng = np.random.default_rng(rng_seed + 1000)
            d = d.with_samples(d.samples + noise_sigma * rng.standard_normal(t.size))
            u = u.with_samples(u.samples + noise_sigma * rng.standard_normal(t.size))
        return d, u, truth
    d = u
    u_pred = layered_reflectivity_trace(dt, duration, f_center, rng_seed, depth_gradient=-0.15)
    return d, u_pred, None


def registration_schedule(f_center: float = 15.0, penalty_weight: float = 0.03,
                          n_bands: int = 14) -> SweepSchedule:
    """Sweep used by the registration examples: to resolve arrival times to a
    small fraction of a period (rather than just fix kinematics) the sweep
    runs past the source band, up to twice the central frequency."""
    return SweepSchedule.for_source(f_center, n_bands=n_bands, high_fraction=2.0,
                                    penalty_weight=penalty_weight)


def inversion_registration_schedule(f_center: float) -> SweepSchedule:
    """Sweep used for the per-iteration gather registrations inside RGLS
    inversion: transmission gathers carry few arrivals, and the warp only
    steers a fractional update, so a short sweep up to half the source
    frequency with decimated quadrature is enough."""
    return SweepSchedule.for_source(f_center, n_bands=5, newton_max_iter=8,
                                    newton_tol=1e-4, quadrature_stride=8,
                                    penalty_weight=1.0)


# ---------------------------------------------------------------------------
# observed-survey generation and full scenario assembly


def make_observed_survey(model: VelocityModel, geometry: AcquisitionGeometry, wavelet: Trace,
                         nt: int, dt: float, pml: PmlConfig = PmlConfig()):
    """Forward-model every shot of the survey on `model`. Deterministic."""
    gathers = []
    for shot in geometry.shots:
        src = SourceTerm(shot.source_position, wavelet)
        g, _ = forward(model, src, shot.receiver_positions, nt, dt, pml)
        gathers.append(g)
    return gathers


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one inversion case end to end."""

    spec: ScenarioSpec
    true_model: VelocityModel
    initial_model: VelocityModel
    geometry: AcquisitionGeometry
    wavelet: Trace
    nt: int
    dt: float
    pml: PmlConfig
    v_bounds: tuple
    f_center: float

    def manifest(self) -> dict:
        """Every resolved parameter, for reproducibility."""
        return {
            "case_id": self.spec.case_id,
            "scale": self.spec.scale,
            "rng_seed": self.spec.rng_seed,
            "noise_sigma": self.spec.noise_sigma,
            "grid": {"nx": self.true_model.nx, "nz": self.true_model.nz, "dx": self.true_model.dx},
            "f_center": self.f_center,
            "wavelet": {"delay": 1.2 / self.f_center, "duration": 2.4 / self.f_center},
            "nt": self.nt,
            "dt": self.dt,
            "pml": {"width": self.pml.width, "max_damping": self.pml.max_damping,
                    "profile_power": self.pml.profile_power},
            "v_bounds": list(self.v_bounds),
            "n_shots": self.geometry.n_shots,
            "n_receivers_per_shot": int(self.geometry.shots[0].receiver_positions.shape[0]),
            "geometry_kind": self.geometry.kind,
            "r3_noise": {"kernel_cells": _R3_KERNEL_CELLS, "field_std": _R3_FIELD_STD}
            if self.spec.case_id == "R3" else None,
        }


def build_scenario(spec: ScenarioSpec, pml: PmlConfig = PmlConfig()) -> Scenario:
    """Resolve all solver parameters for an inversion case.

    dt comes from the CFL bound at the velocity ceiling (so it stays valid as
    the inversion updates the model within v_bounds); the record length covers
    the slowest straight-ray arrival over the domain diagonal plus two wavelet
    durations.
    """
    if spec.case_id not in INVERSION_CASES:
        raise ValueError(f"scenario assembly is for inversion cases, not {spec.case_id!r}")
    true_model = build_model(spec.case_id, spec.scale, spec.rng_seed)
    initial = build_initial_model(spec.case_id, spec.scale)
    geometry = build_geometry(spec.case_id, spec.scale)
    f_center = spec.f_center if spec.f_center is not None else 50.0

    v_all_min = min(float(true_model.v.min()), float(initial.v.min()))
    v_all_max = max(float(true_model.v.max()), float(initial.v.max()))
    v_bounds = (0.8 * v_all_min, 1.1 * v_all_max)

    cap_model = VelocityModel(np.full((16, 16), v_bounds[1]), true_model.dx)
    dt = stability_dt(cap_model)
    delay = 1.2 / f_center
    wavelet = ricker(f_center, dt, 2.4 / f_center, delay)
    diag = math.hypot(
        true_model.extent[1] - true_model.extent[0],
        true_model.extent[3] - true_model.extent[2],
    )
    record_time = diag / v_all_min + delay + 2 * (2.4 / f_center)
    nt = int(math.ceil(record_time / dt))
    return Scenario(spec, true_model, initial, geometry, wavelet, nt, dt, pml, v_bounds, f_center)
