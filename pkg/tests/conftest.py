import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def band_limited_trace(rng, n=800, dt=1e-3, f_max=12.0, taper_frac=0.125):
    """Random smooth trace, band-limited and cosine-tapered so the ends decay
    to zero (shared helper for registration-style tests)."""
    from rgls.signal_core import Trace

    x = rng.standard_normal(n)
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, dt)
    spec[f > f_max] = 0.0
    s = np.fft.irfft(spec, n)
    m = int(taper_frac * n)
    win = np.ones(n)
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(m) / m))
    win[:m] = ramp
    win[-m:] = ramp[::-1]
    return Trace(s * win, dt)
