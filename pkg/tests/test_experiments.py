import numpy as np
import pytest

from rgls.experiments import (
    ScenarioSpec,
    build_geometry,
    build_initial_model,
    build_model,
    build_registration_pair,
    build_scenario,
    known_warp,
    layered_reflectivity_trace,
    make_observed_survey,
)
from rgls.signal_core import Trace, envelope, ricker
from rgls.wave_solver import stability_dt


class TestLensModels:
    def test_center_values(self):
        vh = build_model("H1", 1.0)
        vl = build_model("L1", 1.0)
        k = 250  # (1250, 1250) m at dx = 5
        assert vh.v[k, k] == pytest.approx(6100.0, abs=1e-9)
        assert vl.v[k, k] == pytest.approx(4600.0, abs=1e-9)

    def test_gaussian_tail(self):
        vh = build_model("H2", 1.0)
        # the farthest grid point (corner, 1768 m out) carries only the
        # Gaussian tail of the lens
        d2_corner = 2 * 1250.0**2
        assert vh.v[0, 0] == pytest.approx(5200.0 + 900.0 * np.exp(-d2_corner / 1e6), abs=1e-9)
        assert abs(vh.v[0, 0] - 5200.0) < 40.0
        # far from the center the closed form returns the background to <1 m/s
        assert 900.0 * np.exp(-(2700.0**2) / 1e6) < 1.0

    def test_grid_dimensions(self):
        m = build_model("H1", 1.0)
        assert m.nx == m.nz == 501 and m.dx == 5.0
        m = build_model("H2", 0.25)
        assert m.nx == m.nz == 126

    def test_closed_form_at_random_points(self, rng):
        m = build_model("L2", 1.0)
        for _ in range(10):
            i, j = rng.integers(0, 501, 2)
            x, z = 5.0 * i, 5.0 * j
            expected = 5500.0 - 900.0 * np.exp(-((x - 1250.0) ** 2 + (z - 1250.0) ** 2) / 1e6)
            assert m.v[i, j] == pytest.approx(expected, abs=1e-9)

    def test_r3_noise_field_statistics(self):
        smooth = build_model("R3", 1.0, rng_seed=11)
        x = 5.0 * np.arange(501)
        d2 = (x[:, None] - 1250.0) ** 2 + (x[None, :] - 1250.0) ** 2
        lens = 5000.0 + 900.0 * np.exp(-d2 / 1e6)
        noise = smooth.v - lens
        # zero mean within 3 sigma / sqrt(N_effective): smoothing leaves about
        # one independent sample per kernel footprint (pi * (2*10)^2 cells)
        n_eff = noise.size / (np.pi * 20.0**2)
        assert abs(noise.mean()) <= 3 * noise.std() / np.sqrt(n_eff)
        assert noise.std() == pytest.approx(150.0, rel=0.05)
        # correlation length: smoothing white noise with a Gaussian kernel of
        # std s gives autocorrelation exp(-d^2/(4 s^2)), i.e. a Gaussian fit
        # rho = exp(-d^2/(2 l^2)) with l = sqrt(2) s
        center = noise - noise.mean()
        var = np.mean(center**2)
        ells = []
        for lag in range(4, 22, 2):
            rho = np.mean(center[:-lag, :] * center[lag:, :]) / var
            if rho > 0.05:
                ells.append(np.sqrt(-lag**2 / (2.0 * np.log(rho))))
        ell = np.mean(ells)
        expected = np.sqrt(2) * 10.0
        assert abs(ell - expected) / expected <= 0.2

    def test_r3_seeded_deterministic(self):
        a = build_model("R3", 0.25, rng_seed=7)
        b = build_model("R3", 0.25, rng_seed=7)
        np.testing.assert_array_equal(a.v, b.v)
        c = build_model("R3", 0.25, rng_seed=8)
        assert np.abs(a.v - c.v).max() > 1.0

    def test_initial_models(self):
        assert np.all(build_initial_model("H2", 0.25).v == 5100.0)
        assert np.all(build_initial_model("L1", 0.25).v == 6000.0)
        assert np.all(build_initial_model("R3", 0.25).v == 5100.0)

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            build_model("X9", 1.0)


class TestGeometry:
    def test_crosshole_counts_and_coordinates_at_scale_one(self):
        geo = build_geometry("H1", 1.0)
        assert geo.kind == "crosshole"
        assert geo.n_shots == 49
        for shot in geo.shots:
            assert shot.source_position[0] == pytest.approx(10.0)
            assert shot.receiver_positions.shape == (499, 2)
            assert np.all(shot.receiver_positions[:, 0] == pytest.approx(2490.0))
        z = geo.shots[0].receiver_positions[:, 1]
        assert z[0] == pytest.approx(5.0) and z[-1] == pytest.approx(2495.0)

    def test_nearly_complete_counts_at_scale_one(self):
        geo = build_geometry("H2", 1.0)
        assert geo.kind == "nearly-complete"
        assert geo.n_shots == 196  # 49 per side
        for shot in geo.shots:
            assert shot.receiver_positions.shape == (750, 2)  # 250 per opposite side

    def test_scaling_contract(self):
        geo = build_geometry("H1", 0.25)
        assert geo.n_shots == int(np.ceil(49 * 0.25))
        assert geo.shots[0].receiver_positions.shape[0] == int(np.ceil(499 * 0.25))
        assert geo.shots[0].source_position[0] == pytest.approx(10.0 * 0.25)
        geo2 = build_geometry("R3", 0.25)
        assert geo2.n_shots == 4 * int(np.ceil(49 * 0.25))
        assert geo2.shots[0].receiver_positions.shape[0] == 3 * int(np.ceil(250 * 0.25))


class TestRegistrationPairs:
    def test_reg1_warp_magnitude(self):
        d, u, truth = build_registration_pair("reg1", 3)
        t = u.times
        t_c = 0.5 * u.duration
        np.testing.assert_allclose(truth, known_warp(t, u.duration), atol=1e-14)
        offset = truth - t
        assert offset.max() == pytest.approx(0.15, abs=1e-6)
        assert t[np.argmax(offset)] == pytest.approx(t_c, abs=u.dt)
        assert np.abs(d.samples - u.samples).max() > 0.1  # genuinely different

    def test_reg1_truth_at_zero(self):
        d, u, truth = build_registration_pair("reg1", 3)
        # p*(0) - 0 = 0.15 exp(-8)
        assert truth[0] == pytest.approx(0.15 * np.exp(-8.0), rel=1e-9)

    def test_reg2_zero_noise_equals_reg1(self):
        d1, u1, _ = build_registration_pair("reg1", 3)
        d2, u2, _ = build_registration_pair("reg2", 3, noise_sigma=0.0)
        np.testing.assert_array_equal(d1.samples, d2.samples)
        np.testing.assert_array_equal(u1.samples, u2.samples)

    def test_reg2_noise_is_independent_between_traces(self):
        d1, u1, _ = build_registration_pair("reg1", 3)
        d2, u2, _ = build_registration_pair("reg2", 3, noise_sigma=0.075)
        nd = d2.samples - d1.samples
        nu = u2.samples - u1.samples
        assert nd.std() == pytest.approx(0.075, rel=0.1)
        assert nu.std() == pytest.approx(0.075, rel=0.1)
        corr = np.corrcoef(nd, nu)[0, 1]
        assert abs(corr) < 0.1

    def test_reg3_two_models_lag_grows(self):
        d, u, truth = build_registration_pair("reg3", 3)
        assert truth is None
        # the slower prediction lags the observation increasingly in the coda
        def window_lag(a, b, sl):
            c = np.correlate(a[sl], b[sl], mode="full")
            return np.argmax(c) - (len(a[sl]) - 1)

        early = slice(200, 700)
        late = slice(1200, 1900)
        assert window_lag(d.samples, u.samples, late) < window_lag(d.samples, u.samples, early) <= 0

    def test_layered_trace_normalized_and_dense(self):
        u = layered_reflectivity_trace()
        assert np.abs(u.samples).max() == pytest.approx(1.0)
        env = envelope(u).samples
        # every 100 ms window past the first arrivals carries usable signal
        for k in range(3, 19):
            assert env[k * 100:(k + 1) * 100].max() > 0.02


class TestScenarioAndSurvey:
    def test_manifest_resolved(self):
        sc = build_scenario(ScenarioSpec("H2", scale=0.25))
        man = sc.manifest()
        assert man["grid"]["nx"] == 126
        assert man["n_shots"] == 52
        assert man["f_center"] == 50.0
        assert man["dt"] == pytest.approx(sc.dt)
        assert sc.dt <= stability_dt(sc.true_model)

    def test_survey_deterministic_and_physical(self):
        spec = ScenarioSpec("H1", scale=0.1)
        sc = build_scenario(spec)
        survey_a = make_observed_survey(sc.true_model, sc.geometry, sc.wavelet, sc.nt, sc.dt, sc.pml)
        survey_b = make_observed_survey(sc.true_model, sc.geometry, sc.wavelet, sc.nt, sc.dt, sc.pml)
        for a, b in zip(survey_a, survey_b):
            np.testing.assert_array_equal(a.data, b.data)

    def test_homogeneous_first_arrivals(self):
        # homogeneous model: first arrivals at distance / v for every receiver
        from rgls.wave_solver import SourceTerm, VelocityModel, forward, PmlConfig

        v0 = 5100.0
        model = VelocityModel(np.full((64, 64), v0), 5.0)
        dt = 0.9 * stability_dt(model)
        f0 = 50.0
        wav = ricker(f0, dt, 2.4 / f0, 1.2 / f0)
        src = SourceTerm((10.0, 157.5), wav)
        rec = np.array([[305.0, 50.0], [305.0, 157.5], [305.0, 265.0]])
        nt = int((0.12 + 1.2 / f0 + 2.4 / f0) / dt)
        g, _ = forward(model, src, rec, nt, dt, PmlConfig(16, 600.0))
        for i in range(3):
            dist = np.hypot(*(rec[i] - np.array(src.position)))
            env = envelope(Trace(g.data[i], dt)).samples
            pick = np.argmax(env) * dt - 1.2 / f0
            assert abs(pick - dist / v0) <= 2 * dt

    def test_lens_advances_arrivals(self):
        # H-lens: the through-center path is faster than the homogeneous
        # background prediction (Fermat bound check)
        spec = ScenarioSpec("H2", scale=0.12)
        sc = build_scenario(spec)
        from rgls.wave_solver import SourceTerm, forward

        shot = sc.geometry.shots[0]
        src = SourceTerm(shot.source_position, sc.wavelet)
        obs, _ = forward(sc.true_model, src, shot.receiver_positions, sc.nt, sc.dt, sc.pml)
        pred, _ = forward(sc.initial_model, src, shot.receiver_positions, sc.nt, sc.dt, sc.pml)
        # receiver most aligned with the lens center
        center = np.array([sc.true_model.extent[1] / 2] * 2)
        s = np.array(shot.source_position)
        def cross2(a, b):
            return a[0] * b[1] - a[1] * b[0]

        scores = [abs(cross2(r - s, center - s)) / np.linalg.norm(r - s)
                  for r in shot.receiver_positions]
        i = int(np.argmin(scores))
        delay = 1.2 / sc.f_center
        pick = lambda tr: np.argmax(envelope(Trace(tr, sc.dt)).samples) * sc.dt - delay
        assert pick(obs.data[i]) < pick(pred.data[i])

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ScenarioSpec("nope")
        with pytest.raises(ValueError):
            ScenarioSpec("H1", scale=1.5)
        with pytest.raises(ValueError):
            build_scenario(ScenarioSpec("reg1"))
