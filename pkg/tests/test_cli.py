import json
from pathlib import Path

import numpy as np
import pytest

from rgls.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestMakeScenario:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run_cli("make-scenario", "--case", "H2", "--scale", "0.25",
                           "--seed", "7", "--out", str(out)) == 0
        for name in ("model_true.f32", "model_init.f32", "geometry.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_unknown_case_exits_2(self, tmp_path, capsys):
        rc = run_cli("make-scenario", "--case", "X9", "--out", str(tmp_path))
        assert rc == 2
        assert "unknown case" in capsys.readouterr().err

    def test_h1_manifest_lists_49_shots(self, tmp_path):
        out = tmp_path / "h1"
        assert run_cli("make-scenario", "--case", "H1", "--scale", "1.0", "--out", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["n_shots"] == 49

    def test_registration_case_writes_traces(self, tmp_path):
        out = tmp_path / "reg1"
        assert run_cli("make-scenario", "--case", "reg1", "--out", str(out)) == 0
        for name in ("obs.f32", "pred.f32", "truth.csv", "manifest.json"):
            assert (out / name).exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["f_center"] == 15.0


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """Scenario + observed survey + short LS inversion at a tiny scale."""
    root = tmp_path_factory.mktemp("runs")
    scen = root / "scenario"
    obs = root / "obs"
    inv = root / "inv"
    assert run_cli("make-scenario", "--case", "H2", "--scale", "0.08", "--out", str(scen)) == 0
    assert run_cli("forward", "--scenario", str(scen), "--out", str(obs)) == 0
    assert run_cli("invert", "--scenario", str(scen), "--obs", str(obs), "--method", "ls",
                   "--max-iter", "2", "--snapshot-every", "1", "--out", str(inv)) == 0
    return scen, obs, inv


class TestForwardAndInvert:
    def test_forward_outputs(self, tiny_run):
        scen, obs, inv = tiny_run
        manifest = json.loads((obs / "survey.json").read_text())
        scen_manifest = json.loads((scen / "manifest.json").read_text())
        assert len(manifest["shots"]) == scen_manifest["n_shots"]
        assert (obs / manifest["shots"][0]["data"]).exists()

    def test_invert_outputs(self, tiny_run):
        scen, obs, inv = tiny_run
        assert (inv / "convergence.csv").exists()
        assert (inv / "model_final.f32").exists()
        assert (inv / "model_iter_000000.f32").exists()
        assert (inv / "resolved_config.json").exists()
        lines = (inv / "convergence.csv").read_text().strip().splitlines()
        assert lines[0] == "iter,mode,J,model_rms,step_size"
        assert len(lines) == 4  # header + 2 iterations + final state

    def test_invert_deterministic_csv(self, tiny_run, tmp_path):
        scen, obs, _ = tiny_run
        outs = []
        for tag in ("r1", "r2"):
            out = tmp_path / tag
            assert run_cli("invert", "--scenario", str(scen), "--obs", str(obs),
                           "--method", "ls", "--max-iter", "1", "--out", str(out)) == 0
            outs.append((out / "convergence.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_report_on_inversion_run(self, tiny_run, tmp_path):
        _, _, inv = tiny_run
        out = tmp_path / "rep"
        assert run_cli("report", "--run", str(inv), "--out", str(out)) == 0
        assert (out / "convergence.png").exists()
        assert (out / "models.png").exists()
        assert (out / "summary.csv").exists()


class TestRegisterCommand:
    @pytest.fixture(scope="class")
    def reg_pair(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("reg") / "pair"
        assert run_cli("make-scenario", "--case", "reg1", "--out", str(out)) == 0
        return out

    def test_identical_files_identity_warp(self, reg_pair, tmp_path):
        out = tmp_path / "selfreg"
        assert run_cli("register", "--obs", str(reg_pair / "obs.f32"),
                       "--pred", str(reg_pair / "obs.f32"),
                       "--n-bands", "4", "--out", str(out)) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["misfit_final"] < 1e-12
        warp = json.loads((out / "warps.json").read_text())
        np.testing.assert_allclose(np.asarray(warp["rho"]), np.asarray(warp["node_times"]),
                                   atol=1e-9)
        np.testing.assert_allclose(np.asarray(warp["amp"]), 1.0, atol=1e-9)

    def test_outputs_for_plotting(self, reg_pair, tmp_path):
        out = tmp_path / "regrun"
        assert run_cli("register", "--obs", str(reg_pair / "obs.f32"),
                       "--pred", str(reg_pair / "pred.f32"),
                       "--n-bands", "6", "--out", str(out)) == 0
        reg_csv = (out / "registered.csv").read_text().splitlines()
        assert reg_csv[0] == "t,d,u,d_tilde"
        hist = (out / "objective_history.csv").read_text().splitlines()
        assert hist[0] == "band_index,step,objective"
        rep_out = tmp_path / "regreport"
        assert run_cli("report", "--run", str(out), "--out", str(rep_out)) == 0
        assert (rep_out / "registered_traces.png").exists()
        assert (rep_out / "objective_history.png").exists()

    def test_csv_trace_input(self, reg_pair, tmp_path):
        # CSV trace format accepted interchangeably
        from rgls.signal_core import load_trace, save_trace

        tr = load_trace(reg_pair / "obs.f32")
        csv_path = tmp_path / "obs.csv"
        save_trace(csv_path, tr)
        out = tmp_path / "csvreg"
        assert run_cli("register", "--obs", str(csv_path), "--pred", str(csv_path),
                       "--n-bands", "3", "--out", str(out)) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["misfit_final"] < 1e-10


class TestConfigFile:
    def test_config_defaults_merge(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scale": 0.1, "seed": 9}))
        out = tmp_path / "scen"
        assert run_cli("make-scenario", "--case", "H1", "--config", str(cfg),
                       "--out", str(out)) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["scale"] == 0.1
        assert man["rng_seed"] == 9

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scale": 0.1}))
        out = tmp_path / "scen"
        assert run_cli("make-scenario", "--case", "H1", "--config", str(cfg),
                       "--scale", "0.12", "--out", str(out)) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["scale"] == 0.12
