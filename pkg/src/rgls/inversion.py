"""Outer-loop velocity estimation: steepest descent on squared slowness from
summed per-shot imaging gradients, with LS or RGLS adjoint sources, step-size
control, an optional stall-triggered RGLS-to-LS switch, and convergence
bookkeeping (data misfit J and model RMS error).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint_source import AdjointSourceSpec, ls_residual, rgls_residual
from .errors import GridMismatchError, MismatchedSurveyError, NonFiniteMisfitError
from .signal_core import Trace
from .wave_solver import (
    AcquisitionGeometry,
    PmlConfig,
    ShotGather,
    SourceTerm,
    VelocityModel,
    forward,
    image_gradient,
)

__all__ = ["InversionConfig", "ConvergenceLog", "IterationRecord", "misfit", "model_rms", "invert"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InversionConfig:
    adjoint_spec: AdjointSourceSpec
    max_iter: int = 150
    step_rule: str = "fixed_cap"             # "fixed_cap" | "backtracking"
    step_cap: float = 50.0                   # max per-iteration |dv| in m/s
    switch_to_ls: bool = False
    switch_patience: int = 5
    switch_rel_tol: float = 1e-3
    v_bounds: tuple = (1500.0, 7000.0)
    source_mask_cells: int = 3

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.step_cap > 0:
            raise ValueError("step_cap must be positive")
        if not self.v_bounds[0] < self.v_bounds[1]:
            raise ValueError("v_bounds must be (min, max) with min < max")
        if self.step_rule not in ("fixed_cap", "backtracking"):
            raise ValueError(f"unknown step_rule {self.step_rule!r}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mode: str
    J: float
    model_rms: float            # nan when no true model was supplied
    step_size: float            # max |dv| applied leaving this iterate (m/s)


@dataclass
class ConvergenceLog:
    records: list = field(default_factory=list)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    @property
    def J(self) -> np.ndarray:
        return np.array([r.J for r in self.records])

    @property
    def rms(self) -> np.ndarray:
        return np.array([r.model_rms for r in self.records])

    @property
    def modes(self) -> list:
        return [r.mode for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,mode,J,model_rms,step_size\n")
            for r in self.records:
                fh.write(f"{r.iteration},{r.mode},{float(r.J)!r},{float(r.model_rms)!r},{float(r.step_size)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "ConvergenceLog":
        out = cls()
        lines = Path(path).read_text().strip().splitlines()[1:]
        for line in lines:
            it, mode, j, rms, step = line.split(",")
            out.append(IterationRecord(int(it), mode, float(j), float(rms), float(step)))
        return out


def _check_surveys_aligned(obs_survey, pred_survey):
    if len(obs_survey) != len(pred_survey):
        raise MismatchedSurveyError(
            f"surveys differ in shot count: {len(obs_survey)} vs {len(pred_survey)}"
        )
    for i, (o, p) in enumerate(zip(obs_survey, pred_survey)):
        if o.data.shape != p.data.shape or abs(o.dt - p.dt) > 1e-12 * p.dt:
            raise MismatchedSurveyError(f"shot {i}: gathers not aligned")


def misfit(obs_survey, pred_survey) -> float:
    """Least-squares data misfit 1/2 sum_{shots,receivers} int |u - d|^2 dt
    (trapezoid in time)."""
    _check_surveys_aligned(obs_survey, pred_survey)
    total = 0.0
    for o, p in zip(obs_survey, pred_survey):
        diff2 = (p.data - o.data) ** 2
        w = np.full(o.nt, o.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        total += float(np.sum(diff2 @ w))
    return 0.5 * total


def model_rms(a: VelocityModel, b: VelocityModel) -> float:
    """Root-mean-square velocity difference over the (non-PML) model grid."""
    if a.v.shape != b.v.shape or abs(a.dx - b.dx) > 1e-12 * b.dx:
        raise GridMismatchError(f"model grids differ: {a.v.shape}/{a.dx} vs {b.v.shape}/{b.dx}")
    return float(np.sqrt(np.mean((a.v - b.v) ** 2)))


def acquisition_mask(model: VelocityModel, geometry: AcquisitionGeometry, radius: int = 3) -> np.ndarray:
    """1.0 away from sources/receivers, 0.0 within `radius` cells of any of
    them (suppresses acquisition-footprint singularities in the gradient)."""
    mask = np.ones((model.nx, model.nz))
    positions = []
    for shot in geometry.shots:
        positions.append(shot.source_position)
        positions.extend(map(tuple, shot.receiver_positions))
    ix = np.arange(model.nx)
    iz = np.arange(model.nz)
    for (px, pz) in set(positions):
        gx = (px - model.origin[0]) / model.dx
        gz = (pz - model.origin[1]) / model.dx
        sel_x = np.abs(ix - gx) <= radius
        sel_z = np.abs(iz - gz) <= radius
        mask[np.ix_(sel_x, sel_z)] = 0.0
    return mask


def _apply_update(model: VelocityModel, grad: np.ndarray, eta: float, v_bounds) -> VelocityModel:
    m_new = model.m - eta * grad
    v_new = 1.0 / np.sqrt(np.maximum(m_new, 1.0 / v_bounds[1] ** 2))
    v_new = np.clip(v_new, v_bounds[0], v_bounds[1])
    return VelocityModel(v_new, model.dx, model.origin)


def _forward_survey(model, geometry, wavelet, nt, dt, pml, record=True):
    preds = []
    snaps = []
    for shot in geometry.shots:
        src = SourceTerm(shot.source_position, wavelet)
        g, s = forward(model, src, shot.receiver_positions, nt, dt, pml, record_wavefield=record)
        preds.append(g)
        snaps.append(s)
    return preds, snaps


def invert(obs_survey, geometry: AcquisitionGeometry, initial: VelocityModel,
           cfg: InversionConfig, true_model: VelocityModel | None = None, *,
           wavelet: Trace, nt: int, dt: float, pml: PmlConfig = PmlConfig(),
           dump_hook=None, snapshot_hook=None):
    """Steepest-descent velocity inversion.

    Per iteration: forward-model every shot (recording wavefields), build the
    adjoint source per the configured mode, sum the per-shot imaging gradients
    in shot order, rescale the descent direction so the induced velocity
    change peaks at step_cap, update the squared slowness, and clip to
    v_bounds. J is always the plain least-squares misfit of Eq-class
    (identical bookkeeping in both modes). The log gains one final row for
    the returned model (step_size 0).

    When switch_to_ls is set, RGLS flips to LS once J has dropped below its
    starting value and then stalls (relative decrease < switch_rel_tol over
    switch_patience iterations).

    dump_hook, if given, is called as dump_hook(iteration, residual_gathers,
    warps_per_shot) after each adjoint-source build; snapshot_hook as
    snapshot_hook(iteration, model) at the top of each iteration.
    """
    if len(obs_survey) != geometry.n_shots:
        raise MismatchedSurveyError(
            f"survey has {len(obs_survey)} shots but geometry {geometry.n_shots}"
        )
    model = initial
    spec = cfg.adjoint_spec
    mode = spec.mode
    mask = acquisition_mask(model, geometry, cfg.source_mask_cells)
    logbook = ConvergenceLog()
    j_history = []
    j_initial = None
    switched = mode == "ls"

    for it in range(cfg.max_iter):
        if snapshot_hook is not None:
            snapshot_hook(it, model)
        # the stall check uses misfits of completed iterations so the shot
        # loop can stream (one wavefield in memory at a time)
        if mode == "rgls" and cfg.switch_to_ls and not switched and _stalled(
                j_history, j_initial, cfg.switch_patience, cfg.switch_rel_tol):
            mode = "ls"
            switched = True
            log.info("iteration %d: data misfit stalled; switching rgls -> ls", it)

        j_val = 0.0
        grad = np.zeros((model.nx, model.nz))
        warps_by_shot = []
        residuals = []
        for o, shot in zip(obs_survey, geometry.shots):
            src = SourceTerm(shot.source_position, wavelet)
            p, snaps = forward(model, src, shot.receiver_positions, nt, dt, pml,
                               record_wavefield=True)
            j_val += misfit([o], [p])
            if mode == "rgls":
                resid, warps = rgls_residual(o, p, spec)
                warps_by_shot.append(warps)
            else:
                resid = ls_residual(o, p)
                warps_by_shot.append(None)
            residuals.append(resid)
            grad += image_gradient(model, src, resid, nt, dt, pml, forward_snaps=snaps)
        grad *= mask
        if not np.isfinite(j_val):
            logbook.append(IterationRecord(it, mode, j_val, _rms_or_nan(model, true_model), 0.0))
            err = NonFiniteMisfitError(f"misfit became non-finite at iteration {it}")
            err.logbook = logbook
            raise err
        if j_initial is None:
            j_initial = j_val
        j_history.append(j_val)
        if dump_hook is not None:
            dump_hook(it, residuals, warps_by_shot)

        grad_norm = float(np.linalg.norm(grad))
        m_norm = float(np.linalg.norm(model.m))
        if grad_norm < 1e-8 * m_norm:
            logbook.append(IterationRecord(it, mode, j_val, _rms_or_nan(model, true_model), 0.0))
            log.info("iteration %d: gradient stationary; stopping", it)
            return model, logbook

        # descent in m = 1/v^2; |dv| ~ v^3/2 * |dm|, scale so max |dv| = step_cap
        # (one corrective rescale because the m -> v map is nonlinear)
        dv_per_eta = 0.5 * model.v**3 * np.abs(grad)
        eta = cfg.step_cap / float(dv_per_eta.max())
        candidate = _apply_update(model, grad, eta, cfg.v_bounds)
        step_applied = float(np.abs(candidate.v - model.v).max())
        if step_applied > cfg.step_cap:
            eta *= cfg.step_cap / step_applied
            candidate = _apply_update(model, grad, eta, cfg.v_bounds)
            step_applied = float(np.abs(candidate.v - model.v).max())

        if cfg.step_rule == "backtracking" and mode == "ls":
            for _ in range(8):
                trial_preds, _ = _forward_survey(candidate, geometry, wavelet, nt, dt, pml,
                                                 record=False)
                if misfit(obs_survey, trial_preds) < j_val:
                    break
                eta *= 0.5
                candidate = _apply_update(model, grad, eta, cfg.v_bounds)
                step_applied = float(np.abs(candidate.v - model.v).max())

        logbook.append(IterationRecord(it, mode, j_val, _rms_or_nan(model, true_model),
                                       step_applied))
        model = candidate

    preds, _ = _forward_survey(model, geometry, wavelet, nt, dt, pml, record=False)
    j_val = misfit(obs_survey, preds)
    logbook.append(IterationRecord(cfg.max_iter, mode, j_val, _rms_or_nan(model, true_model), 0.0))
    return model, logbook


def _rms_or_nan(model, true_model):
    return model_rms(model, true_model) if true_model is not None else float("nan")


def _stalled(j_history, j_initial, patience, rel_tol) -> bool:
    """Stall detector for the RGLS-to-LS switch: armed only after J has come
    back below its starting value (RGLS allows a transient misfit hump), then
    fires when the relative decrease over the last `patience` iterations is
    below rel_tol."""
    if len(j_history) < patience + 1:
        return False
    if j_history[-1] >= j_initial:
        return False
    window = j_history[-(patience + 1):]
    drop = (window[0] - min(window[1:])) / max(abs(window[0]), 1e-300)
    return drop < rel_tol
