"""2D constant-density acoustic propagation: m * u_tt = lap(u) + f with
m = 1/v^2, 4th-order space / 2nd-order leapfrog time, PML absorbing layers,
receiver sampling, adjoint propagation, and the imaging condition.

The adjoint stepper is the exact algebraic transpose of the forward stepper
(including the PML auxiliary fields), so the discrete dot-product identity
<F x, y> == <x, F^T y> holds to rounding error and the imaging condition is
the exact gradient of the discrete misfit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InstabilityError
from .signal_core import Trace

__all__ = [
    "VelocityModel",
    "SourceTerm",
    "ShotGather",
    "PmlConfig",
    "AcquisitionGeometry",
    "ShotLayout",
    "stability_dt",
    "forward",
    "adjoint",
    "image_gradient",
    "save_model",
    "load_model",
    "save_survey",
    "load_survey",
]

# Stability constant of the 4th-order second-difference stencil:
# max symbol = (16/3)/dx^2 per axis, so the 2D leapfrog bound is
# dt <= dx / (v_max * sqrt(2) * 2/sqrt(3)).
_C_STENCIL = 2.0 / np.sqrt(3.0)
_CFL_SAFETY = 0.9


@dataclass(frozen=True)
class VelocityModel:
    """2D grid of wave speeds (m/s). Axis 0 is x, axis 1 is z (z fastest in
    memory, matching the row-major file layout); grid spacing dx is isotropic."""

    v: np.ndarray
    dx: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 16 or v.shape[1] < 16:
            raise ValueError("velocity grid must be 2D with nx, nz >= 16")
        if not np.all(v > 0):
            raise ValueError("velocities must be positive everywhere")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.v.shape[0]

    @property
    def nz(self) -> int:
        return self.v.shape[1]

    @property
    def m(self) -> np.ndarray:
        """Squared slowness 1/v^2."""
        return 1.0 / self.v**2

    @classmethod
    def from_m(cls, m: np.ndarray, dx: float, origin=(0.0, 0.0)) -> "VelocityModel":
        return cls(1.0 / np.sqrt(m), dx, origin)

    @property
    def extent(self) -> tuple:
        """(x_min, x_max, z_min, z_max) of the grid."""
        return (
            self.origin[0],
            self.origin[0] + (self.nx - 1) * self.dx,
            self.origin[1],
            self.origin[1] + (self.nz - 1) * self.dx,
        )


@dataclass(frozen=True)
class SourceTerm:
    """Point source: position (x, z) in meters plus a wavelet trace."""

    position: tuple
    wavelet: Trace

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class ShotGather:
    """Receiver traces for one shot, stored as a (n_receivers, nt) matrix."""

    source: SourceTerm
    receiver_positions: np.ndarray
    data: np.ndarray
    dt: float

    def __post_init__(self):
        pos = np.asarray(self.receiver_positions, dtype=np.float64)
        data = np.asarray(self.data, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("receiver_positions must be a (n, 2) array with n >= 1")
        if data.shape[0] != pos.shape[0] or data.ndim != 2:
            raise ValueError("data must be (n_receivers, nt)")
        object.__setattr__(self, "receiver_positions", pos)
        object.__setattr__(self, "data", data)

    @property
    def n_receivers(self) -> int:
        return self.data.shape[0]

    @property
    def nt(self) -> int:
        return self.data.shape[1]

    def trace(self, i: int) -> Trace:
        return Trace(self.data[i], self.dt, 0.0)

    def with_data(self, data) -> "ShotGather":
        return ShotGather(self.source, self.receiver_positions, data, self.dt)


@dataclass(frozen=True)
class ShotLayout:
    """Source and receiver placements for one shot."""

    source_position: tuple
    receiver_positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.receiver_positions, dtype=np.float64)
        object.__setattr__(self, "source_position", (float(self.source_position[0]), float(self.source_position[1])))
        object.__setattr__(self, "receiver_positions", pos)


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Ordered shot layouts for a survey (crosshole or nearly-complete)."""

    shots: tuple
    kind: str = ""

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(self.shots))

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "shots": [
                    {
                        "source": list(s.source_position),
                        "receivers": np.asarray(s.receiver_positions).tolist(),
                    }
                    for s in self.shots
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AcquisitionGeometry":
        obj = json.loads(text)
        shots = tuple(
            ShotLayout(tuple(s["source"]), np.asarray(s["receivers"], dtype=np.float64))
            for s in obj["shots"]
        )
        return cls(shots, kind=obj.get("kind", ""))


@dataclass(frozen=True)
class PmlConfig:
    """Absorbing layer: width in cells, peak damping (1/s), profile exponent."""

    width: int = 20
    max_damping: float = 600.0
    profile_power: float = 2.0

    def __post_init__(self):
        if self.width < 8:
            raise ValueError("PML width must be >= 8 cells")
        if not self.max_damping > 0:
            raise ValueError("max_damping must be positive")


def stability_dt(model: VelocityModel) -> float:
    """Largest safe leapfrog time step: cfl_safety * dx / (v_max sqrt(2) c_stencil)."""
    return _CFL_SAFETY * model.dx / (float(model.v.max()) * np.sqrt(2.0) * _C_STENCIL)


# ---------------------------------------------------------------------------
# kernels


@njit(inline="always")
def _fwd_cell_pml(u, up, phi, psi, un, phin, psin, c, alp, sxz, ax1, ex, ez, fx, fz, i12dx2, i12dx, i, j):
    lap = (
        -u[i - 2, j] + 16.0 * u[i - 1, j] - 30.0 * u[i, j] + 16.0 * u[i + 1, j] - u[i + 2, j]
        - u[i, j - 2] + 16.0 * u[i, j - 1] - 30.0 * u[i, j] + 16.0 * u[i, j + 1] - u[i, j + 2]
    ) * i12dx2
    dphix = (phi[i - 2, j] - 8.0 * phi[i - 1, j] + 8.0 * phi[i + 1, j] - phi[i + 2, j]) * i12dx
    dpsiz = (psi[i, j - 2] - 8.0 * psi[i, j - 1] + 8.0 * psi[i, j + 1] - psi[i, j + 2]) * i12dx
    un[i, j] = alp[i, j] * (
        (2.0 - sxz[i, j]) * u[i, j] + ax1[i, j] * up[i, j] + c[i, j] * (lap + dphix + dpsiz)
    )
    ux = (u[i - 2, j] - 8.0 * u[i - 1, j] + 8.0 * u[i + 1, j] - u[i + 2, j]) * i12dx
    uz = (u[i, j - 2] - 8.0 * u[i, j - 1] + 8.0 * u[i, j + 1] - u[i, j + 2]) * i12dx
    phin[i, j] = fx[i, j] * phi[i, j] + ex[i, j] * ux
    psin[i, j] = fz[i, j] * psi[i, j] + ez[i, j] * uz


@njit(cache=True, fastmath=True)
def _fwd_step(u, up, phi, psi, un, phin, psin, c, alp, sxz, ax1, ex, ez, fx, fz, i12dx2, i12dx, w):
    """One forward leapfrog step. Outer 2 rings stay zero (Dirichlet).

    Cells deeper than w+2 from the padded edge take a damping-free fast path;
    phi/psi are only ever nonzero in the damping ring, so their buffers are
    written there only.
    """
    nx, nz = u.shape
    jlo, jhi = w + 2, nz - w - 2
    for i in range(2, nx - 2):
        if jlo <= i < nx - w - 2:
            for j in range(2, jlo):
                _fwd_cell_pml(u, up, phi, psi, un, phin, psin, c, alp, sxz, ax1, ex, ez, fx, fz, i12dx2, i12dx, i, j)
            for j in range(jlo, jhi):
                lap = (
                    -u[i - 2, j] + 16.0 * u[i - 1, j] - 30.0 * u[i, j] + 16.0 * u[i + 1, j] - u[i + 2, j]
                    - u[i, j - 2] + 16.0 * u[i, j - 1] - 30.0 * u[i, j] + 16.0 * u[i, j + 1] - u[i, j + 2]
                ) * i12dx2
                un[i, j] = 2.0 * u[i, j] - up[i, j] + c[i, j] * lap
            for j in range(jhi, nz - 2):
                _fwd_cell_pml(u, up, phi, psi, un, phin, psin, c, alp, sxz, ax1, ex, ez, fx, fz, i12dx2, i12dx, i, j)
        else:
            for j in range(2, nz - 2):
                _fwd_cell_pml(u, up, phi, psi, un, phin, psin, c, alp, sxz, ax1, ex, ez, fx, fz, i12dx2, i12dx, i, j)


@njit(cache=True, fastmath=True)
def _adj_products(p, chi, xi, calp, ex, ez, cq, exchi, ezxi, w):
    """Products of the adjoint state with the transposed diagonal factors:
    cq = c*alp*p everywhere, exchi = ex*chi and ezxi = ez*xi in the damping
    ring (they are identically zero elsewhere)."""
    nx, nz = p.shape
    for i in range(nx):
        ipml = i < w + 2 or i >= nx - w - 2
        for j in range(nz):
            cq[i, j] = calp[i, j] * p[i, j]
            if ipml or j < w + 2 or j >= nz - w - 2:
                exchi[i, j] = ex[i, j] * chi[i, j]
                ezxi[i, j] = ez[i, j] * xi[i, j]


@njit(inline="always")
def _adj_cell_pml(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi, alp, sxz, ax1, fx, fz, i12dx2, i12dx, i, j):
    lapcq = (
        -cq[i - 2, j] + 16.0 * cq[i - 1, j] - 30.0 * cq[i, j] + 16.0 * cq[i + 1, j] - cq[i + 2, j]
        - cq[i, j - 2] + 16.0 * cq[i, j - 1] - 30.0 * cq[i, j] + 16.0 * cq[i, j + 1] - cq[i, j + 2]
    ) * i12dx2
    dxchi = (exchi[i - 2, j] - 8.0 * exchi[i - 1, j] + 8.0 * exchi[i + 1, j] - exchi[i + 2, j]) * i12dx
    dzxi = (ezxi[i, j - 2] - 8.0 * ezxi[i, j - 1] + 8.0 * ezxi[i, j + 1] - ezxi[i, j + 2]) * i12dx
    ap = alp[i, j] * p[i, j]
    pn[i, j] = (2.0 - sxz[i, j]) * ap + lapcq + s[i, j] - dxchi - dzxi
    sn[i, j] = ax1[i, j] * ap
    dxcq = (cq[i - 2, j] - 8.0 * cq[i - 1, j] + 8.0 * cq[i + 1, j] - cq[i + 2, j]) * i12dx
    dzcq = (cq[i, j - 2] - 8.0 * cq[i, j - 1] + 8.0 * cq[i, j + 1] - cq[i, j + 2]) * i12dx
    chin[i, j] = fx[i, j] * chi[i, j] - dxcq
    xin[i, j] = fz[i, j] * xi[i, j] - dzcq


@njit(cache=True, fastmath=True)
def _adj_step(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi, alp, sxz, ax1, fx, fz, i12dx2, i12dx, w):
    """Exact transpose of _fwd_step acting on the adjoint state (p, s, chi, xi).

    cq = c*alp*p, exchi = ex*chi, ezxi = ez*xi are precomputed products so the
    stencils read neighbor values of the transposed diagonal factors.
    """
    nx, nz = p.shape
    jlo, jhi = w + 2, nz - w - 2
    for i in range(2, nx - 2):
        if jlo <= i < nx - w - 2:
            for j in range(2, jlo):
                _adj_cell_pml(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi, alp, sxz, ax1, fx, fz, i12dx2, i12dx, i, j)
            for j in range(jlo, jhi):
                lapcq = (
                    -cq[i - 2, j] + 16.0 * cq[i - 1, j] - 30.0 * cq[i, j] + 16.0 * cq[i + 1, j] - cq[i + 2, j]
                    - cq[i, j - 2] + 16.0 * cq[i, j - 1] - 30.0 * cq[i, j] + 16.0 * cq[i, j + 1] - cq[i, j + 2]
                ) * i12dx2
                pn[i, j] = 2.0 * p[i, j] + lapcq + s[i, j]
                sn[i, j] = -p[i, j]
            for j in range(jhi, nz - 2):
                _adj_cell_pml(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi, alp, sxz, ax1, fx, fz, i12dx2, i12dx, i, j)
        else:
            for j in range(2, nz - 2):
                _adj_cell_pml(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi, alp, sxz, ax1, fx, fz, i12dx2, i12dx, i, j)


# ---------------------------------------------------------------------------
# propagation setup


class _Workspace:
    """Padded grids and precomputed PML coefficient arrays for one model."""

    def __init__(self, model: VelocityModel, dt: float, pml, dtype=np.float64):
        self.model = model
        self.dt = float(dt)
        self.dtype = np.dtype(dtype)
        self.w = 0 if pml is None else pml.width
        w = self.w
        vp = np.pad(model.v, w, mode="edge")
        self.nxp, self.nzp = vp.shape
        self.v2 = vp**2

        sig_x = np.zeros(self.nxp)
        sig_z = np.zeros(self.nzp)
        if pml is not None:
            ramp = pml.max_damping * ((np.arange(w, 0, -1)) / w) ** pml.profile_power
            sig_x[:w] = ramp
            sig_x[-w:] = ramp[::-1]
            sig_z[:w] = ramp
            sig_z[-w:] = ramp[::-1]
        sx = sig_x[:, None] + np.zeros((1, self.nzp))
        sz = np.zeros((self.nxp, 1)) + sig_z[None, :]

        dt2 = dt * dt
        cast = lambda a: np.ascontiguousarray(a, dtype=self.dtype)
        self.c = cast(dt2 * self.v2)
        ax = 0.5 * dt * (sx + sz)
        self.alp = cast(1.0 / (1.0 + ax))
        self.ax1 = cast(ax - 1.0)
        self.sxz = cast(dt2 * sx * sz)
        self.ex = cast(dt * (sz - sx))
        self.ez = cast(dt * (sx - sz))
        self.fx = cast(1.0 - dt * sx)
        self.fz = cast(1.0 - dt * sz)
        self.i12dx2 = self.dtype.type(1.0 / (12.0 * model.dx**2))
        self.i12dx = self.dtype.type(1.0 / (12.0 * model.dx))

    def zeros(self):
        return np.zeros((self.nxp, self.nzp), dtype=self.dtype)

    def interior(self, a: np.ndarray) -> np.ndarray:
        w = self.w
        return a[w : self.nxp - w, w : self.nzp - w] if w else a

    def grid_index(self, position) -> tuple:
        """Nearest padded-grid node of a physical position (must be interior)."""
        gx = (position[0] - self.model.origin[0]) / self.model.dx
        gz = (position[1] - self.model.origin[1]) / self.model.dx
        if not (0 <= gx <= self.model.nx - 1 and 0 <= gz <= self.model.nz - 1):
            raise ValueError(f"position {position} outside the model interior")
        return int(round(gx)) + self.w, int(round(gz)) + self.w

    def bilinear(self, positions) -> tuple:
        """Indices and weights for bilinear sampling at physical positions."""
        pos = np.asarray(positions, dtype=np.float64)
        gx = (pos[:, 0] - self.model.origin[0]) / self.model.dx
        gz = (pos[:, 1] - self.model.origin[1]) / self.model.dx
        if np.any(gx < 0) or np.any(gx > self.model.nx - 1) or np.any(gz < 0) or np.any(gz > self.model.nz - 1):
            raise ValueError("receiver position outside the model interior")
        ix = np.minimum(np.floor(gx).astype(np.int64), self.model.nx - 2)
        iz = np.minimum(np.floor(gz).astype(np.int64), self.model.nz - 2)
        fx = gx - ix
        fz = gz - iz
        wts = np.stack(
            [(1 - fx) * (1 - fz), (1 - fx) * fz, fx * (1 - fz), fx * fz], axis=1
        )
        return ix + self.w, iz + self.w, wts


def _sample(u, ix, iz, wts):
    return (
        wts[:, 0] * u[ix, iz]
        + wts[:, 1] * u[ix, iz + 1]
        + wts[:, 2] * u[ix + 1, iz]
        + wts[:, 3] * u[ix + 1, iz + 1]
    )


@njit(cache=True)
def _inject(u, ix, iz, wts, vals):
    for r in range(ix.size):
        i = ix[r]
        j = iz[r]
        u[i, j] += wts[r, 0] * vals[r]
        u[i, j + 1] += wts[r, 1] * vals[r]
        u[i + 1, j] += wts[r, 2] * vals[r]
        u[i + 1, j + 1] += wts[r, 3] * vals[r]


@njit(cache=True, fastmath=True)
def _accumulate_image(accum, p, sm1, s0, sp1, w):
    """accum += p_interior * (sp1 - 2*s0 + sm1) on the model grid."""
    nx, nz = accum.shape
    for i in range(nx):
        for j in range(nz):
            accum[i, j] += p[i + w, j + w] * (sp1[i, j] - 2.0 * s0[i, j] + sm1[i, j])


def forward(
    model: VelocityModel,
    source: SourceTerm,
    receivers,
    nt: int,
    dt: float,
    pml: PmlConfig | None = PmlConfig(),
    record_wavefield: bool = False,
    snapshot_stride: int = 1,
    dtype=np.float64,
):
    """Propagate one shot; returns (ShotGather, wavefield or None).

    Receiver sample k holds u(x_r, k*dt) (bilinear sampling); the wavefield,
    if recorded, holds interior snapshots u[k] on the model grid every
    `snapshot_stride` steps. dt must satisfy the CFL bound of stability_dt.
    dtype selects the wavefield precision (float32 roughly halves run time).
    """
    ws = _Workspace(model, dt, pml, dtype=dtype)
    src_i, src_j = ws.grid_index(source.position)
    rix, riz, rwts = ws.bilinear(receivers)
    wav = source.wavelet.samples
    src_scale = dt * dt * ws.v2[src_i, src_j] / model.dx**2

    u = ws.zeros()
    up = ws.zeros()
    phi = ws.zeros()
    psi = ws.zeros()
    un = ws.zeros()
    phin = ws.zeros()
    psin = ws.zeros()

    nr = len(rix)
    data = np.zeros((nr, nt))
    snaps = None
    if record_wavefield:
        n_snap = (nt + snapshot_stride - 1) // snapshot_stride
        snaps = np.zeros((n_snap, model.nx, model.nz), dtype=ws.dtype)

    blow_up = 1e10 * max(np.abs(wav).max(), np.finfo(float).tiny)
    for k in range(nt):
        data[:, k] = _sample(u, rix, riz, rwts)
        if record_wavefield and k % snapshot_stride == 0:
            snaps[k // snapshot_stride] = ws.interior(u)
        _fwd_step(u, up, phi, psi, un, phin, psin, ws.c, ws.alp, ws.sxz, ws.ax1,
                  ws.ex, ws.ez, ws.fx, ws.fz, ws.i12dx2, ws.i12dx, ws.w)
        if k < wav.size:
            un[src_i, src_j] += src_scale * wav[k]
        u, up, un = un, u, up
        phi, phin = phin, phi
        psi, psin = psin, psi
        if k % 100 == 99 and np.abs(u[src_i, src_j]) + np.abs(u).max() > blow_up:
            raise InstabilityError(f"wavefield norm exceeded 1e10 x source norm at step {k}")

    gather = ShotGather(source, np.asarray(receivers, dtype=np.float64), data, dt)
    return gather, snaps


def _adjoint_sweep(model, residual_gather, nt, dt, pml, source=None, forward_snaps=None,
                   store_q=False, dtype=np.float64):
    """Backward transpose recursion shared by adjoint() and image_gradient().

    Feeds residual rows in reversed time through the transposed stepper.
    Optionally accumulates the imaging sum over the forward snapshots, stores
    q_k = v^2 * p_k snapshots, and/or samples the source node.
    """
    ws = _Workspace(model, dt, pml, dtype=dtype)
    rix, riz, rwts = ws.bilinear(residual_gather.receiver_positions)
    res_by_time = np.ascontiguousarray(residual_gather.data.T)

    p = ws.zeros()
    s = ws.zeros()
    chi = ws.zeros()
    xi = ws.zeros()
    pn = ws.zeros()
    sn = ws.zeros()
    chin = ws.zeros()
    xin = ws.zeros()
    cq = ws.zeros()
    exchi = ws.zeros()
    ezxi = ws.zeros()

    calp = ws.c * ws.alp
    q_snaps = np.zeros((nt, model.nx, model.nz)) if store_q else None
    accum = np.zeros((model.nx, model.nz)) if forward_snaps is not None else None
    zero_snap = np.zeros((model.nx, model.nz), dtype=ws.dtype)
    src_series = None
    if source is not None:
        src_i, src_j = ws.grid_index(source)
        src_scale = dt * dt * ws.v2[src_i, src_j] / model.dx**2
        src_series = np.zeros(nt)

    v2_int = ws.interior(ws.v2)
    for k in range(nt - 2, -1, -1):
        _adj_products(p, chi, xi, calp, ws.ex, ws.ez, cq, exchi, ezxi, ws.w)
        _adj_step(p, s, chi, xi, pn, sn, chin, xin, cq, exchi, ezxi,
                  ws.alp, ws.sxz, ws.ax1, ws.fx, ws.fz, ws.i12dx2, ws.i12dx, ws.w)
        p, pn = pn, p
        s, sn = sn, s
        chi, chin = chin, chi
        xi, xin = xin, xi
        _inject(p, rix, riz, rwts, res_by_time[k + 1])

        if store_q:
            q_snaps[k] = v2_int * ws.interior(p)
        if accum is not None:
            sm1 = forward_snaps[k - 1] if k >= 1 else zero_snap
            _accumulate_image(accum, p, sm1, forward_snaps[k], forward_snaps[k + 1], ws.w)
        if src_series is not None:
            src_series[k] = src_scale * p[src_i, src_j]

    out = {}
    if store_q:
        out["q"] = q_snaps
    if accum is not None:
        out["accum"] = accum
        out["v2_int"] = v2_int
    if src_series is not None:
        out["src_series"] = src_series
    return out


def adjoint(model: VelocityModel, residual_gather: ShotGather, nt: int, dt: float, pml=PmlConfig(),
            dtype=np.float64):
    """Adjoint wavefield q(x, t): the residual traces, reversed in time, are
    injected at the receivers and propagated by the transpose of the forward
    stepper; snapshots are on the model grid. Zero residual gives a zero field.
    """
    out = _adjoint_sweep(model, residual_gather, nt, dt, pml, store_q=True, dtype=dtype)
    return out["q"]


def transposed_source_response(model, residual_gather, source_position, nt, dt, pml=PmlConfig(),
                               dtype=np.float64):
    """Exact transpose of the forward map (source series -> receiver traces):
    maps receiver traces back to a time series at the source node. This is the
    operator pair checked by the dot-product identity."""
    out = _adjoint_sweep(model, residual_gather, nt, dt, pml, source=source_position, dtype=dtype)
    return out["src_series"]


def _trapezoid_weights(nt: int, dt: float) -> np.ndarray:
    w = np.full(nt, dt)
    w[0] = 0.5 * dt
    w[-1] = 0.5 * dt
    return w


def image_gradient(
    model: VelocityModel,
    source: SourceTerm,
    residual_gather: ShotGather,
    nt: int,
    dt: float,
    pml: PmlConfig | None = PmlConfig(),
    forward_snaps: np.ndarray | None = None,
    dtype=np.float64,
):
    """Gradient of the least-squares misfit J with respect to squared slowness m:
    the zero-lag correlation of the adjoint field with d2u/dt2 summed over time
    (trapezoid weights are folded into the injected residual).

    With residual = observed - predicted, the returned grid is dJ/dm for
    J = 1/2 sum int |u - d|^2 dt. Passing `forward_snaps` (from a prior
    forward(..., record_wavefield=True) run on the same model) skips the
    re-modeling of the incident wavefield.
    """
    if forward_snaps is None:
        _, forward_snaps = forward(model, source, residual_gather.receiver_positions, nt, dt, pml,
                                   record_wavefield=True, dtype=dtype)
    weighted = residual_gather.with_data(residual_gather.data * _trapezoid_weights(nt, dt)[None, :])
    out = _adjoint_sweep(model, weighted, nt, dt, pml, forward_snaps=forward_snaps, dtype=dtype)
    # dJ/dm = v^2 * sum_k p_k (u[k+1]-2u[k]+u[k-1]); the dt^2 of the second
    # time difference cancels against the dt^2 factor of the transposed update.
    return out["v2_int"] * out["accum"]


# ---------------------------------------------------------------------------
# file formats: model = float32 little-endian row-major (z fastest) + JSON
# sidecar; survey = one float32 trace block per shot + JSON manifest.


def save_model(path, model: VelocityModel) -> None:
    path = Path(path)
    model.v.astype("<f4").tofile(path)
    sidecar = {"nx": model.nx, "nz": model.nz, "dx": model.dx, "origin": list(model.origin)}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_model(path) -> VelocityModel:
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    v = np.fromfile(path, dtype="<f4").astype(np.float64).reshape(sidecar["nx"], sidecar["nz"])
    return VelocityModel(v, float(sidecar["dx"]), tuple(sidecar.get("origin", (0.0, 0.0))))


def save_survey(out_dir, gathers, wavelet: Trace) -> None:
    """Write shot data blocks plus a survey.json manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shots = []
    for i, g in enumerate(gathers):
        name = f"shot_{i:04d}.f32"
        g.data.astype("<f4").tofile(out_dir / name)
        shots.append(
            {
                "data": name,
                "source": list(g.source.position),
                "receivers": g.receiver_positions.tolist(),
                "n_receivers": g.n_receivers,
                "nt": g.nt,
            }
        )
    manifest = {
        "dt": gathers[0].dt,
        "nt": gathers[0].nt,
        "wavelet": {"samples": wavelet.samples.tolist(), "dt": wavelet.dt, "t0": wavelet.t0},
        "shots": shots,
    }
    (out_dir / "survey.json").write_text(json.dumps(manifest))


def load_survey(survey_dir):
    """Read a survey written by save_survey; returns (gathers, wavelet)."""
    survey_dir = Path(survey_dir)
    manifest = json.loads((survey_dir / "survey.json").read_text())
    wav = manifest["wavelet"]
    wavelet = Trace(np.asarray(wav["samples"]), wav["dt"], wav["t0"])
    dt = manifest["dt"]
    gathers = []
    for s in manifest["shots"]:
        data = np.fromfile(survey_dir / s["data"], dtype="<f4").astype(np.float64)
        data = data.reshape(s["n_receivers"], s["nt"])
        source = SourceTerm(tuple(s["source"]), wavelet)
        gathers.append(ShotGather(source, np.asarray(s["receivers"]), data, dt))
    return gathers, wavelet
