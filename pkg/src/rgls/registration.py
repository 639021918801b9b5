"""Trace registration: fit warp p(t) and amplitude A(t) splines so that the
low-frequency-augmented observed trace matches the warped LFA prediction,
by damped Newton steps inside a low-to-high frequency continuation.

Objective (per band k, with penalty weight lambda):

    W[p, A] = 1/2 int |D_k - A(t) U_k(p(t))|^2 dt + lambda/2 int |p(t) - t|^2 dt

where D_k, U_k are the low-pass filtered LFA signals of the observed and
predicted traces. The gradient and Hessian with respect to the spline
coefficients are analytic; integrals use the trapezoidal rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import MismatchedGatherError, MismatchedTraceError, SingularSystemError
from .signal_core import FrequencyBand, Trace, lfa, lowpass, trapezoid
from .spline_warp import SplineBasis, WarpModel, sample_trace, sample_trace_with_derivatives

__all__ = [
    "SweepSchedule",
    "RegistrationResult",
    "objective",
    "gradient",
    "hessian",
    "newton_solve",
    "register",
    "register_gather",
    "registration_misfit",
]

log = logging.getLogger(__name__)

_DAMPING_GROWTH = 10.0
_DAMPING_CAP_FACTOR = 1e8


@dataclass(frozen=True)
class SweepSchedule:
    """Frequency continuation schedule plus inner Newton controls.

    quadrature_stride > 1 evaluates the band objective/derivative integrals
    on every stride-th sample; the band signals are low-passed well below the
    decimated Nyquist, so this only trades a tiny quadrature error for speed
    (used by the per-iteration gather registrations inside the inversion).
    """

    bands: tuple
    newton_max_iter: int = 20
    newton_tol: float = 1e-6
    penalty_weight: float = 1.0
    quadrature_stride: int = 1

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise ValueError("schedule needs at least one band")
        omegas = [b.omega_max for b in bands]
        if not all(b > a for a, b in zip(omegas, omegas[1:])):
            raise ValueError("band omega_max values must be strictly increasing")
        object.__setattr__(self, "bands", bands)

    @classmethod
    def for_source(cls, f_center: float, n_bands: int = 8, low_fraction: float = 1.0 / 16.0,
                   high_fraction: float = 0.5, **kwargs) -> "SweepSchedule":
        """Default sweep: n_bands passbands geometrically spaced from
        f_center*low_fraction up to f_center*high_fraction. The default top
        at half the central frequency suffices to fix kinematics; raise
        high_fraction (and n_bands) when sub-period trace matching is the
        goal rather than an inversion update direction."""
        omegas = np.geomspace(f_center * low_fraction, f_center * high_fraction, n_bands)
        return cls(tuple(FrequencyBand.with_default_taper(o) for o in omegas), **kwargs)


@dataclass(frozen=True)
class RegistrationResult:
    warp: WarpModel
    objective_history: np.ndarray  # rows of (band_index, objective value)
    converged: bool
    fold_warning: bool


def _check_comparable(d: Trace, u: Trace):
    if d.n != u.n or abs(d.dt - u.dt) > 1e-12 * u.dt:
        raise MismatchedTraceError(
            f"traces not comparable: n={d.n}/{u.n}, dt={d.dt}/{u.dt}"
        )


class _SplitWarp:
    """Registration-internal warp state: the warp rides the continuation's
    refinement ladder while the amplitude keeps its own fixed coarse basis
    (amplitude corrections are smooth; extra amplitude freedom lets A(t)
    absorb residuals in low-signal stretches and destabilizes the warp)."""

    __slots__ = ("warp_basis", "rho", "amp_basis", "amp")

    def __init__(self, warp_basis, rho, amp_basis, amp):
        self.warp_basis = warp_basis
        self.rho = np.asarray(rho, dtype=np.float64)
        self.amp_basis = amp_basis
        self.amp = np.asarray(amp, dtype=np.float64)

    @classmethod
    def from_warp_model(cls, w: WarpModel) -> "_SplitWarp":
        return cls(w.basis, w.rho, w.basis, w.amp)

    def eval_pa(self, t):
        p, _ = self.warp_basis.interpolate(self.rho, t)
        a, _ = self.amp_basis.interpolate(self.amp, t)
        return p, a

    def with_rho(self, rho) -> "_SplitWarp":
        return _SplitWarp(self.warp_basis, rho, self.amp_basis, self.amp)

    def with_amp(self, amp) -> "_SplitWarp":
        return _SplitWarp(self.warp_basis, self.rho, self.amp_basis, amp)

    def refined(self, n_intervals: int) -> "_SplitWarp":
        """Resample the warp onto a finer/coarser node grid (cardinal basis:
        nodal values are the coefficients)."""
        t0, t1 = self.warp_basis.node_times[0], self.warp_basis.node_times[-1]
        nb = SplineBasis.over(t0, t1, n_intervals)
        p_nodes, _ = self.warp_basis.interpolate(self.rho, nb.node_times)
        return _SplitWarp(nb, p_nodes, self.amp_basis, self.amp)

    def to_warp_model(self) -> WarpModel:
        """Unified WarpModel on the warp basis (amplitude resampled)."""
        if self.amp_basis.n_nodes == self.warp_basis.n_nodes and np.array_equal(
                self.amp_basis.node_times, self.warp_basis.node_times):
            return WarpModel(self.warp_basis, self.rho, self.amp)
        a_nodes, _ = self.amp_basis.interpolate(self.amp, self.warp_basis.node_times)
        return WarpModel(self.warp_basis, self.rho, a_nodes)


class _BandSignals:
    """Band-limited LFA signals for one continuation band. U' and U'' are
    taken as the exact derivatives of the cubic interpolant used to evaluate
    U(p), which keeps the analytic gradient/Hessian consistent with finite
    differences of the discrete objective."""

    def __init__(self, D: Trace, U: Trace, band: FrequencyBand, quad_stride: int = 1):
        q = max(1, quad_stride)
        self.d = lowpass(D, band).samples[::q]
        self.u_tr = lowpass(U, band)
        self.times = D.times[::q]
        self.dt = D.dt * q
        w = np.full(self.times.size, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        self.wts = w
        self.power = float(np.mean(self.d**2))

    @classmethod
    def from_traces(cls, d: Trace, u: Trace, band: FrequencyBand, lfa_kind: str,
                    quad_stride: int = 1) -> "_BandSignals":
        _check_comparable(d, u)
        return cls(lfa(d, lfa_kind), lfa(u, lfa_kind), band, quad_stride)


def _objective_core(bs: _BandSignals, w: _SplitWarp, lam: float) -> float:
    p, a = w.eval_pa(bs.times)
    r = bs.d - a * sample_trace(bs.u_tr, p)
    misfit = 0.5 * float(np.dot(bs.wts, r * r))
    pen = 0.5 * lam * float(np.dot(bs.wts, (p - bs.times) ** 2))
    return misfit + pen


def _gradient_core(bs: _BandSignals, w: _SplitWarp, lam: float, phi_w, phi_a):
    p, a = w.eval_pa(bs.times)
    up, upr, _ = sample_trace_with_derivatives(bs.u_tr, p, order=1)
    r = bs.d - a * up
    g_rho = phi_w.T @ (bs.wts * (-a * upr * r + lam * (p - bs.times)))
    g_amp = phi_a.T @ (bs.wts * (-up * r))
    return g_rho, g_amp


def _hessian_core(bs: _BandSignals, w: _SplitWarp, lam: float, phi_w, phi_a):
    p, a = w.eval_pa(bs.times)
    up, upr, uppr = sample_trace_with_derivatives(bs.u_tr, p, order=2)
    r = bs.d - a * up
    d_rho = bs.wts * ((a * upr) ** 2 - r * a * uppr + lam)
    d_amp = bs.wts * up**2
    h_rho = phi_w.T @ (d_rho[:, None] * phi_w)
    h_amp = phi_a.T @ (d_amp[:, None] * phi_a)
    return 0.5 * (h_rho + h_rho.T), 0.5 * (h_amp + h_amp.T)


def objective(d: Trace, u: Trace, w: WarpModel, band: FrequencyBand,
              lfa_kind: str = "hilbert_sum", penalty_weight: float = 1.0) -> float:
    """Registration objective W for one band (LFA applied to both traces)."""
    bs = _BandSignals.from_traces(d, u, band, lfa_kind)
    return _objective_core(bs, _SplitWarp.from_warp_model(w), penalty_weight)


def gradient(d: Trace, u: Trace, w: WarpModel, band: FrequencyBand,
             lfa_kind: str = "hilbert_sum", penalty_weight: float = 1.0):
    """Analytic gradient of the band objective w.r.t. (rho, amp) coefficients."""
    bs = _BandSignals.from_traces(d, u, band, lfa_kind)
    phi = w.basis.matrix(bs.times)
    return _gradient_core(bs, _SplitWarp.from_warp_model(w), penalty_weight, phi, phi)


def hessian(d: Trace, u: Trace, w: WarpModel, band: FrequencyBand,
            lfa_kind: str = "hilbert_sum", penalty_weight: float = 1.0):
    """Analytic Hessians (H_rho, H_amp) of the band objective (symmetric)."""
    bs = _BandSignals.from_traces(d, u, band, lfa_kind)
    phi = w.basis.matrix(bs.times)
    return _hessian_core(bs, _SplitWarp.from_warp_model(w), penalty_weight, phi, phi)


def _damped_newton_step(h, g, theta, f_cur, evaluate, cap, mu=0.0):
    """Levenberg-damped Newton step: solve (H + mu I) s = -g with mu grown by
    10x until H + mu I is positive definite and the step does not increase
    the objective. Returns (theta_new, f_new, mu_next); theta_new is None if
    no improving step exists. Raises SingularSystemError if the cap is hit
    without ever achieving positive definiteness. The damping carries over
    between iterations (mu argument) and relaxes after every success.
    """
    n = g.size
    eye = np.eye(n)
    seed = 1e-6 * max(np.mean(np.abs(np.diag(h))), 1e-30)
    ever_pd = False
    while True:
        try:
            np.linalg.cholesky(h + mu * eye)
            pd = True
        except np.linalg.LinAlgError:
            pd = False
        if pd:
            ever_pd = True
            step = np.linalg.solve(h + mu * eye, -g)
            cand = theta + step
            f_new = evaluate(cand)
            if f_new <= f_cur and np.isfinite(f_new):
                mu_next = 0.0 if mu <= seed else mu / _DAMPING_GROWTH
                return cand, f_new, mu_next
        mu = seed if mu == 0.0 else mu * _DAMPING_GROWTH
        if mu > cap:
            if not ever_pd:
                raise SingularSystemError(
                    f"Hessian not positive definite within damping cap {cap:g}"
                )
            return None, f_cur, mu / _DAMPING_GROWTH


def _newton(bs: _BandSignals, w: _SplitWarp, sched: SweepSchedule, phi_w, phi_a,
            band_index: int, history: list):
    """Inner Newton loop of the continuation: alternate a rho step and an amp
    step (in that order), Levenberg-damped so the band objective never
    increases, until the relative parameter step is small without damping."""
    lam = sched.penalty_weight
    cap = _DAMPING_CAP_FACTOR * max(bs.power, 1e-30)
    f = _objective_core(bs, w, lam)
    history.append((band_index, f))
    converged = False
    mu_rho = mu_amp = 0.0
    stagnant = 0
    for _ in range(sched.newton_max_iter):
        rho_prev = w.rho
        amp_prev = w.amp
        f_iter_start = f

        g_tol = 1e-14 * max(1.0, f)
        g_rho, _ = _gradient_core(bs, w, lam, phi_w, phi_a)
        if np.abs(g_rho).max() > g_tol:
            h_rho, _ = _hessian_core(bs, w, lam, phi_w, phi_a)
            cand, f_new, mu_rho = _damped_newton_step(
                h_rho, g_rho, w.rho, f,
                lambda rho: _objective_core(bs, w.with_rho(rho), lam),
                cap, mu_rho,
            )
            if cand is not None:
                w = w.with_rho(cand)
                f = f_new
                history.append((band_index, f))

        _, g_amp = _gradient_core(bs, w, lam, phi_w, phi_a)
        if np.abs(g_amp).max() > g_tol:
            _, h_amp = _hessian_core(bs, w, lam, phi_w, phi_a)
            cand, f_new, mu_amp = _damped_newton_step(
                h_amp, g_amp, w.amp, f,
                lambda amp: _objective_core(bs, w.with_amp(amp), lam),
                cap, mu_amp,
            )
            if cand is not None:
                w = w.with_amp(cand)
                f = f_new
                history.append((band_index, f))

        step = np.concatenate([w.rho - rho_prev, w.amp - amp_prev])
        scale = max(float(np.linalg.norm(np.concatenate([w.rho, w.amp]))), 1e-30)
        undamped = mu_rho == 0.0 and mu_amp == 0.0
        if undamped and np.linalg.norm(step) / scale < sched.newton_tol:
            converged = True
            break
        # alternation can zigzag at negligible gains; two stagnant iterations
        # in a row end the band
        stagnant = stagnant + 1 if f_iter_start - f <= 1e-9 * max(abs(f), 1e-300) else 0
        if stagnant >= 2:
            converged = True
            break
    return w, converged


def newton_solve(d: Trace, u: Trace, w0: WarpModel, band: FrequencyBand,
                 lfa_kind: str = "hilbert_sum", sched: SweepSchedule | None = None) -> WarpModel:
    """Damped Newton minimization of the band objective from w0."""
    if sched is None:
        sched = SweepSchedule((band,))
    bs = _BandSignals.from_traces(d, u, band, lfa_kind)
    phi = w0.basis.matrix(bs.times)
    w, _ = _newton(bs, _SplitWarp.from_warp_model(w0), sched, phi, phi, 0, [])
    return w.to_warp_model()


def register(d: Trace, u: Trace, sched: SweepSchedule, lfa_kind: str = "hilbert_sum",
             n_intervals: int = 4, w0: WarpModel | None = None) -> RegistrationResult:
    """Full continuation registration of predicted trace u onto observed d.

    Initializes p(t) = t, A(t) = 1, computes the LFA signals once, then sweeps
    the bands low to high, warm-starting each from the previous solution.

    The warp's node count follows the continuation: a band with passband edge
    omega resolves warp features no finer than a couple of its periods, so
    each band uses min(n_intervals, max(4, ceil(duration*omega/2))) warp
    subintervals (nodal values resampled on refinement), the last band always
    the full n_intervals. The amplitude keeps a fixed coarse basis throughout
    and is resampled onto the final warp basis in the returned WarpModel.
    With the default n_intervals=4 no refinement ever happens. Newton
    failures degrade to converged=False instead of aborting.
    """
    _check_comparable(d, u)
    D = lfa(d, lfa_kind)
    U = lfa(u, lfa_kind)
    n_min = min(4, n_intervals)
    if w0 is not None:
        w = _SplitWarp.from_warp_model(w0)
    else:
        basis0 = SplineBasis.over(d.t0, d.t_end, n_min)
        w = _SplitWarp(basis0, basis0.node_times.copy(), basis0, np.ones(basis0.n_nodes))
    quad_times = d.times[::max(1, sched.quadrature_stride)]
    phi_w = w.warp_basis.matrix(quad_times)
    phi_a = w.amp_basis.matrix(quad_times)

    history: list = []
    converged = True
    n_bands = len(sched.bands)
    for bi, band in enumerate(sched.bands):
        if bi == n_bands - 1:
            n_band = n_intervals
        else:
            n_band = int(min(n_intervals, max(n_min, np.ceil(d.duration * band.omega_max / 2.0))))
        if n_band != w.warp_basis.n_intervals:
            w = w.refined(n_band)
            phi_w = w.warp_basis.matrix(quad_times)

        bs = _BandSignals(D, U, band, sched.quadrature_stride)
        try:
            w, band_ok = _newton(bs, w, sched, phi_w, phi_a, bi, history)
        except SingularSystemError as exc:
            log.warning("band %d registration aborted: %s", bi, exc)
            converged = False
            continue
        converged = converged and band_ok

    warp = w.to_warp_model()
    fold = warp.min_warp_slope() <= 0.0
    if fold:
        log.warning("registered warp folds (p' <= 0 somewhere)")
    return RegistrationResult(warp, np.asarray(history, dtype=np.float64), converged, fold)


def registration_misfit(d: Trace, u: Trace, w: WarpModel) -> float:
    """Raw-trace registration error 1/2 int |d - A(t) u(p(t))|^2 dt."""
    p, a, _, _ = w.eval(d.times)
    r = d.samples - a * sample_trace(u, p)
    return 0.5 * trapezoid(r * r, d.dt)


def _check_gathers_aligned(obs, pred):
    if (obs.n_receivers != pred.n_receivers or obs.nt != pred.nt
            or abs(obs.dt - pred.dt) > 1e-12 * pred.dt):
        raise MismatchedGatherError(
            f"gathers not aligned: receivers {obs.n_receivers}/{pred.n_receivers}, "
            f"nt {obs.nt}/{pred.nt}, dt {obs.dt}/{pred.dt}"
        )
    if not np.allclose(obs.receiver_positions, pred.receiver_positions):
        raise MismatchedGatherError("gathers not aligned: receiver positions differ")


def register_gather(obs, pred, sched: SweepSchedule, lfa_kind: str = "hilbert_sum",
                    stride: int = 50, n_intervals: int = 4):
    """Register every stride-th trace pair of a gather and linearly interpolate
    the nodal warp/amplitude vectors across receiver index for the remaining
    traces (nearest registered trace beyond the ends).

    Returns one WarpModel per receiver, ordered by receiver index. A trace
    whose registration errors out keeps the identity warp (logged).
    """
    _check_gathers_aligned(obs, pred)
    nr = obs.n_receivers
    reg_idx = list(range(0, nr, max(1, stride)))

    fallback_basis = SplineBasis.over(0.0, (obs.nt - 1) * obs.dt, n_intervals)
    reg_warps = {}
    for i in reg_idx:
        try:
            res = register(obs.trace(i), pred.trace(i), sched, lfa_kind, n_intervals)
            reg_warps[i] = res.warp
        except Exception:  # pragma: no cover - defensive: keep the gather going
            log.warning("registration failed on receiver %d; using identity", i, exc_info=True)
            reg_warps[i] = WarpModel.identity(fallback_basis)

    warps = []
    for i in range(nr):
        if i in reg_warps:
            warps.append(reg_warps[i])
            continue
        lo = max(j for j in reg_idx if j < i)
        hi_candidates = [j for j in reg_idx if j > i]
        if not hi_candidates:
            warps.append(reg_warps[lo])
            continue
        hi = min(hi_candidates)
        frac = (i - lo) / (hi - lo)
        wl, wh = reg_warps[lo], reg_warps[hi]
        warps.append(
            WarpModel(wl.basis, (1 - frac) * wl.rho + frac * wh.rho,
                      (1 - frac) * wl.amp + frac * wh.amp)
        )
    return warps
