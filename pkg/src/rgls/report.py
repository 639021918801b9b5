"""Render run artifacts to matplotlib figures and summary CSVs.

Figures land next to the delimited outputs so a run directory is
self-contained: convergence curves and model panels for inversion runs,
trace overlays and objective decay for registration runs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .inversion import ConvergenceLog
from .wave_solver import load_model

__all__ = ["report_inversion", "report_registration", "report_model", "write_report"]

_DPI = 150


def _save(fig, path):
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def _imshow_model(ax, model_v, dx, title, vmin, vmax):
    im = ax.imshow(model_v.T, origin="upper", cmap="viridis", vmin=vmin, vmax=vmax,
                   extent=[0, model_v.shape[0] * dx, model_v.shape[1] * dx, 0])
    ax.set_title(title)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    return im


def report_inversion(run_dir, out_dir) -> list:
    """Figures + summary for an inversion run directory (convergence.csv,
    model_final.f32, resolved_config.json)."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    logbook = ConvergenceLog.from_csv(run_dir / "convergence.csv")
    iters = [r.iteration for r in logbook.records]
    modes = logbook.modes

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.semilogy(iters, logbook.J, "k-", lw=1.2)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("data misfit J")
    ax1.set_title("data misfit")
    rms = logbook.rms
    if np.all(np.isfinite(rms)):
        ax2.plot(iters, rms, "k-", lw=1.2)
        ax2.set_ylabel("model rms error (m/s)")
    else:
        ax2.text(0.5, 0.5, "no true model", ha="center", va="center", transform=ax2.transAxes)
    ax2.set_xlabel("iteration")
    ax2.set_title("model error")
    switches = [i for i in range(1, len(modes)) if modes[i] != modes[i - 1]]
    for s in switches:
        for ax in (ax1, ax2):
            ax.axvline(iters[s], color="tab:red", ls="--", lw=1.0)
    fig.suptitle(f"inversion convergence ({modes[0]}" + (" -> ls" if switches else "") + ")")
    path = out_dir / "convergence.png"
    _save(fig, path)
    written.append(path)

    cfg_path = run_dir / "resolved_config.json"
    panels = []
    if cfg_path.exists():
        cfg = json.loads(cfg_path.read_text())
        scen = cfg.get("scenario_dir")
        if scen:
            scen = Path(scen)
            if (scen / "model_true.f32").exists():
                panels.append(("true", load_model(scen / "model_true.f32")))
            if (scen / "model_init.f32").exists():
                panels.append(("initial", load_model(scen / "model_init.f32")))
    if (run_dir / "model_final.f32").exists():
        panels.append(("final", load_model(run_dir / "model_final.f32")))
    if panels:
        vs = np.concatenate([m.v.ravel() for _, m in panels])
        vmin, vmax = vs.min(), vs.max()
        fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.4))
        axes = np.atleast_1d(axes)
        for ax, (name, m) in zip(axes, panels):
            im = _imshow_model(ax, m.v, m.dx, name, vmin, vmax)
        fig.colorbar(im, ax=list(axes), shrink=0.85, label="v (m/s)")
        path = out_dir / "models.png"
        _save(fig, path)
        written.append(path)

    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["key", "value"])
        wr.writerow(["iterations", iters[-1]])
        wr.writerow(["final_J", repr(float(logbook.J[-1]))])
        wr.writerow(["initial_J", repr(float(logbook.J[0]))])
        if np.all(np.isfinite(rms)):
            wr.writerow(["final_model_rms", repr(float(rms[-1]))])
            wr.writerow(["initial_model_rms", repr(float(rms[0]))])
        wr.writerow(["mode_initial", modes[0]])
        wr.writerow(["mode_final", modes[-1]])
        wr.writerow(["switch_iteration", iters[switches[0]] if switches else ""])
    written.append(summary)
    return written


def report_registration(run_dir, out_dir) -> list:
    """Figures + summary for a registration run directory (report.json,
    registered.csv, objective_history.csv)."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    reg_csv = run_dir / "registered.csv"
    if reg_csv.exists():
        data = np.genfromtxt(reg_csv, delimiter=",", skip_header=1)
        t, d, u, dt_ = data[:, 0], data[:, 1], data[:, 2], data[:, 3]
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
        ax1.plot(t, d, "k-", lw=0.9, label="observed d")
        ax1.plot(t, u, "r--", lw=0.9, label="predicted u")
        ax1.legend(loc="upper right")
        ax1.set_title("before registration")
        ax2.plot(t, d, "k-", lw=0.9, label="observed d")
        ax2.plot(t, dt_, "b--", lw=0.9, label="registered A u(p)")
        ax2.legend(loc="upper right")
        ax2.set_title("after registration")
        ax2.set_xlabel("t (s)")
        path = out_dir / "registered_traces.png"
        _save(fig, path)
        written.append(path)

    hist_csv = run_dir / "objective_history.csv"
    if hist_csv.exists():
        hist = np.genfromtxt(hist_csv, delimiter=",", skip_header=1)
        if hist.ndim == 1:
            hist = hist[None, :]
        fig, ax = plt.subplots(figsize=(6, 3.4))
        ax.semilogy(hist[:, 2], "k-", lw=1.0)
        edges = np.flatnonzero(np.diff(hist[:, 0])) + 1
        for e in edges:
            ax.axvline(e, color="0.8", lw=0.7)
        ax.set_xlabel("accepted step (band edges marked)")
        ax.set_ylabel("band objective W")
        path = out_dir / "objective_history.png"
        _save(fig, path)
        written.append(path)

    rep = run_dir / "report.json"
    if rep.exists():
        obj = json.loads(rep.read_text())
        summary = out_dir / "summary.csv"
        with open(summary, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["key", "value"])
            for k, v in obj.items():
                wr.writerow([k, v])
        written.append(summary)
    return written


def report_model(scenario_dir, out_dir) -> list:
    """Model panel(s) for a scenario directory."""
    scenario_dir = Path(scenario_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = []
    for name, fname in (("true", "model_true.f32"), ("initial", "model_init.f32")):
        if (scenario_dir / fname).exists():
            panels.append((name, load_model(scenario_dir / fname)))
    if not panels:
        return []
    vs = np.concatenate([m.v.ravel() for _, m in panels])
    fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.4))
    axes = np.atleast_1d(axes)
    for ax, (name, m) in zip(axes, panels):
        im = _imshow_model(ax, m.v, m.dx, name, vs.min(), vs.max())
    fig.colorbar(im, ax=list(axes), shrink=0.85, label="v (m/s)")
    path = out_dir / "models.png"
    _save(fig, path)
    return [path]


def write_report(run_dir, out_dir) -> list:
    """Dispatch on the artifacts present in run_dir."""
    run_dir = Path(run_dir)
    if (run_dir / "convergence.csv").exists():
        return report_inversion(run_dir, out_dir)
    if (run_dir / "report.json").exists() or (run_dir / "registered.csv").exists():
        return report_registration(run_dir, out_dir)
    if (run_dir / "manifest.json").exists():
        return report_model(run_dir, out_dir)
    raise FileNotFoundError(f"no reportable artifacts found in {run_dir}")
