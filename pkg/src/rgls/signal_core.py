"""1D signal primitives: Ricker source, DFT/Hilbert/low-pass operators,
low-frequency augmentation (LFA) transforms, trapezoidal quadrature, trace I/O.

All operations are pure functions; traces are immutable value objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Trace",
    "Spectrum",
    "FrequencyBand",
    "ricker",
    "spectrum",
    "inverse_spectrum",
    "hilbert",
    "envelope",
    "lfa",
    "LFA_KINDS",
    "lowpass",
    "spectral_derivative",
    "trapezoid",
    "load_trace",
    "save_trace",
]


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled time series at one receiver for one shot.

    samples : 1-D float array
    dt      : seconds per sample (> 0)
    t0      : start time in seconds
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("trace needs at least 2 samples in a 1-D array")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)

    @property
    def duration(self) -> float:
        return self.dt * (self.n - 1)

    def with_samples(self, samples) -> "Trace":
        """New trace on the same time grid."""
        return Trace(np.asarray(samples, dtype=np.float64), self.dt, self.t0)


@dataclass(frozen=True)
class Spectrum:
    """Discrete Fourier coefficients of a trace, continuous-time normalized
    (coefficients = dt * FFT) so that Parseval holds as
    sum(samples**2)*dt == sum(|coefficients|**2)*df.
    """

    coefficients: np.ndarray
    df: float
    n_time: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.coefficients.size, d=1.0 / (self.df * self.coefficients.size))


@dataclass(frozen=True)
class FrequencyBand:
    """Low-pass passband [0, omega_max] Hz with a raised-cosine rolloff of
    taper_width Hz above it."""

    omega_max: float
    taper_width: float = field(default=0.0)

    def __post_init__(self):
        if self.omega_max < 0 or self.taper_width < 0:
            raise ValueError("omega_max and taper_width must be nonnegative")

    @classmethod
    def with_default_taper(cls, omega_max: float) -> "FrequencyBand":
        return cls(omega_max=omega_max, taper_width=0.2 * omega_max)


LFA_KINDS = ("hilbert_sum", "square", "abs")


def ricker(f_center: float, dt: float, duration: float, delay: float) -> Trace:
    """Ricker wavelet w(t) = (1 - 2 pi^2 fc^2 tau^2) exp(-pi^2 fc^2 tau^2),
    tau = t - delay, sampled on [0, duration]. Peak value 1 at t = delay.
    """
    if f_center <= 0:
        raise ValueError(f"f_center must be positive, got {f_center}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not dt < 1.0 / (10.0 * f_center):
        raise ValueError(f"dt={dt} too coarse for f_center={f_center} (need dt < 1/(10 f))")
    n = int(round(duration / dt)) + 1
    tau = dt * np.arange(n) - delay
    arg = (np.pi * f_center * tau) ** 2
    return Trace((1.0 - 2.0 * arg) * np.exp(-arg), dt, 0.0)


def spectrum(u: Trace) -> Spectrum:
    """Forward DFT with continuous-time normalization (see Spectrum)."""
    coef = u.dt * np.fft.fft(u.samples)
    return Spectrum(coef, df=1.0 / (u.n * u.dt), n_time=u.n)


def inverse_spectrum(s: Spectrum) -> np.ndarray:
    """Samples whose spectrum() is s; inverse of the forward transform."""
    dt = 1.0 / (s.df * s.coefficients.size)
    return np.fft.ifft(s.coefficients / dt).real[: s.n_time]


def hilbert(u: Trace) -> Trace:
    """Hilbert transform via the frequency-domain multiplier -i*sgn(omega).

    The DC and Nyquist bins of the transform response are zero (sgn(0) = 0,
    and the Nyquist bin has no well-defined sign), so constants map to zero
    exactly. Computed with a same-length DFT: the operator is diagonal in the
    trace's own DFT basis, which keeps hilbert(hilbert(u)) == -u exact for
    zero-mean, Nyquist-free signals. Non-periodic signals show wraparound
    artifacts near the ends; compare on the interior.
    """
    spec = np.fft.rfft(u.samples)
    spec[0] = 0.0
    if u.n % 2 == 0:
        spec[-1] = 0.0
        spec[1:-1] *= -1j
    else:
        spec[1:] *= -1j
    return u.with_samples(np.fft.irfft(spec, n=u.n))


def envelope(u: Trace) -> Trace:
    """Analytic-signal envelope sqrt(u^2 + (Hu)^2)."""
    h = hilbert(u).samples
    return u.with_samples(np.sqrt(u.samples**2 + h**2))


def lfa(u: Trace, kind: str) -> Trace:
    """Low-frequency augmented signal.

    kind='hilbert_sum' : u + |u + i Hu|   (signal plus its envelope)
    kind='square'      : u^2
    kind='abs'         : |u|

    All three manufacture energy near zero frequency from a band-limited
    input so a registration frequency sweep can start at DC.
    """
    if kind == "hilbert_sum":
        return u.with_samples(u.samples + envelope(u).samples)
    if kind == "square":
        return u.with_samples(u.samples**2)
    if kind == "abs":
        return u.with_samples(np.abs(u.samples))
    raise ValueError(f"unknown LFA kind {kind!r}; expected one of {LFA_KINDS}")


def _lowpass_gain(freqs: np.ndarray, band: FrequencyBand) -> np.ndarray:
    """Gain 1 on [0, omega_max], raised-cosine to 0 over (omega_max, omega_max+taper]."""
    f = np.abs(freqs)
    gain = np.zeros_like(f)
    gain[f <= band.omega_max] = 1.0
    if band.taper_width > 0:
        roll = (f > band.omega_max) & (f <= band.omega_max + band.taper_width)
        x = (f[roll] - band.omega_max) / band.taper_width
        gain[roll] = 0.5 * (1.0 + np.cos(np.pi * x))
    return gain


def lowpass(u: Trace, band: FrequencyBand) -> Trace:
    """Zero-phase frequency-domain low-pass filter.

    Same-length DFT, so nested applications are exactly idempotent:
    lowpass(lowpass(u, B_j), B_k) == lowpass(u, B_j) whenever
    B_k.omega_max >= B_j.omega_max + B_j.taper_width.
    """
    nyquist = 0.5 / u.dt
    if band.omega_max > nyquist:
        raise ValueError(f"omega_max={band.omega_max} exceeds Nyquist {nyquist}")
    freqs = np.fft.rfftfreq(u.n, d=u.dt)
    spec = np.fft.rfft(u.samples) * _lowpass_gain(freqs, band)
    return u.with_samples(np.fft.irfft(spec, n=u.n))


def spectral_derivative(u: Trace, order: int = 1) -> Trace:
    """Time derivative computed in the frequency domain (multiply by (i*2*pi*f)^order).

    Intended for band-limited signals (the output of lowpass), where the
    spectrum decays to zero well below Nyquist.
    """
    freqs = np.fft.rfftfreq(u.n, d=u.dt)
    spec = np.fft.rfft(u.samples) * (2j * np.pi * freqs) ** order
    return u.with_samples(np.fft.irfft(spec, n=u.n))


def trapezoid(f, dt: float) -> float:
    """Trapezoidal quadrature of uniformly sampled values."""
    f = np.asarray(f, dtype=np.float64)
    if f.size < 2:
        raise ValueError("need at least 2 samples")
    return float(np.trapezoid(f, dx=dt))


# ---------------------------------------------------------------------------
# Trace file I/O: CSV with header "t,value", or flat little-endian float32
# binary with a JSON sidecar {n, dt, t0}.


def save_trace(path, u: Trace) -> None:
    """Write a trace; format chosen by extension (.csv, else binary+sidecar)."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w") as fh:
            fh.write("t,value\n")
            for t, v in zip(u.times, u.samples):
                fh.write(f"{float(t)!r},{float(v)!r}\n")
    else:
        u.samples.astype("<f4").tofile(path)
        sidecar = {"n": u.n, "dt": u.dt, "t0": u.t0}
        Path(str(path) + ".json").write_text(json.dumps(sidecar))


def load_trace(path) -> Trace:
    """Read a trace written by save_trace."""
    path = Path(path)
    if path.suffix == ".csv":
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
            raise ValueError(f"{path}: expected two columns t,value with >= 2 rows")
        t, v = data[:, 0], data[:, 1]
        return Trace(v, dt=float(t[1] - t[0]), t0=float(t[0]))
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    if samples.size != sidecar["n"]:
        raise ValueError(f"{path}: expected {sidecar['n']} samples, found {samples.size}")
    return Trace(samples, dt=float(sidecar["dt"]), t0=float(sidecar["t0"]))
