"""Command-line front end: scenario generation, forward modeling, trace
registration, LS/RGLS inversion, and report rendering.

Exit codes: 0 success (including diagnostic outcomes like non-converged
registration), 2 bad arguments, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, report
from .adjoint_source import AdjointSourceSpec
from .errors import NonFiniteMisfitError
from .inversion import InversionConfig, invert, model_rms
from .registration import (
    FrequencyBand,
    SweepSchedule,
    register,
    register_gather,
    registration_misfit,
)
from .signal_core import Trace, load_trace, save_trace
from .spline_warp import WarpModel, apply_warp
from .wave_solver import (
    PmlConfig,
    load_model,
    load_survey,
    save_model,
    save_survey,
)

_REG_TRACE_DEFAULTS = dict(n_bands=14, high_fraction=2.0, penalty=0.03, n_intervals=16)


def _json_dump(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1))


def _load_scenario_dir(scenario_dir):
    scenario_dir = Path(scenario_dir)
    manifest = json.loads((scenario_dir / "manifest.json").read_text())
    return scenario_dir, manifest


def _pml_from_manifest(manifest) -> PmlConfig:
    p = manifest["pml"]
    return PmlConfig(p["width"], p["max_damping"], p["profile_power"])


def cmd_make_scenario(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = experiments.ScenarioSpec(
        case_id=args.case, scale=args.scale, rng_seed=args.seed,
        noise_sigma=args.noise_sigma, f_center=args.f0,
    )
    if args.case in experiments.REGISTRATION_CASES:
        f_center = args.f0 if args.f0 is not None else 15.0
        d, u, truth = experiments.build_registration_pair(
            args.case, spec.rng_seed, spec.noise_sigma, f_center=f_center)
        save_trace(out / "obs.f32", d)
        save_trace(out / "pred.f32", u)
        if truth is not None:
            with open(out / "truth.csv", "w") as fh:
                fh.write("t,p_star\n")
                for t, p in zip(d.times, truth):
                    fh.write(f"{float(t)!r},{float(p)!r}\n")
        manifest = {
            "case_id": args.case,
            "rng_seed": spec.rng_seed,
            "noise_sigma": spec.noise_sigma if args.case == "reg2" else 0.0,
            "f_center": f_center,
            "dt": d.dt,
            "duration": d.duration,
            "registration": dict(_REG_TRACE_DEFAULTS),
            "files": {"obs": "obs.f32", "pred": "pred.f32",
                      "truth": "truth.csv" if truth is not None else None},
        }
        _json_dump(manifest, out / "manifest.json")
        print(f"wrote registration pair {args.case} to {out}")
        return 0

    sc = experiments.build_scenario(spec)
    save_model(out / "model_true.f32", sc.true_model)
    save_model(out / "model_init.f32", sc.initial_model)
    (out / "geometry.json").write_text(sc.geometry.to_json())
    manifest = sc.manifest()
    manifest["files"] = {
        "model_true": "model_true.f32",
        "model_init": "model_init.f32",
        "geometry": "geometry.json",
    }
    _json_dump(manifest, out / "manifest.json")
    print(f"wrote scenario {args.case} (scale {args.scale}, {sc.geometry.n_shots} shots) to {out}")
    return 0


def cmd_forward(args) -> int:
    scenario_dir, manifest = _load_scenario_dir(args.scenario)
    from .wave_solver import AcquisitionGeometry

    geometry = AcquisitionGeometry.from_json((scenario_dir / "geometry.json").read_text())
    model_path = Path(args.model) if args.model else scenario_dir / "model_true.f32"
    model = load_model(model_path)
    f_center = manifest["f_center"]
    dt = manifest["dt"]
    wavelet = experiments.ricker(f_center, dt, 2.4 / f_center, 1.2 / f_center)
    pml = _pml_from_manifest(manifest)
    out = Path(args.out)
    gathers = experiments.make_observed_survey(model, geometry, wavelet, manifest["nt"], dt, pml)
    save_survey(out, gathers, wavelet)
    print(f"modeled {len(gathers)} shots from {model_path} into {out}")
    return 0


def _build_schedule(args) -> SweepSchedule:
    if args.bands:
        omegas = [float(x) for x in args.bands.split(",")]
        bands = tuple(FrequencyBand.with_default_taper(o) for o in omegas)
        return SweepSchedule(bands, penalty_weight=args.penalty)
    return SweepSchedule.for_source(
        args.f0, n_bands=args.n_bands, high_fraction=args.high_fraction,
        penalty_weight=args.penalty,
    )


def cmd_register(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sched = _build_schedule(args)
    obs_path = Path(args.obs)
    pred_path = Path(args.pred)

    if obs_path.is_dir() or pred_path.is_dir():
        obs_gathers, _ = load_survey(obs_path)
        pred_gathers, _ = load_survey(pred_path)
        all_warps = []
        for o, p in zip(obs_gathers, pred_gathers):
            warps = register_gather(o, p, sched, args.lfa, stride=args.stride,
                                    n_intervals=args.n_intervals)
            all_warps.append([json.loads(w.to_json()) for w in warps])
        _json_dump(all_warps, out / "warps.json")
        _json_dump({"shots": len(all_warps), "stride": args.stride, "lfa": args.lfa},
                   out / "report.json")
        print(f"registered {len(all_warps)} gathers into {out}")
        return 0

    d = load_trace(obs_path)
    u = load_trace(pred_path)
    res = register(d, u, sched, args.lfa, n_intervals=args.n_intervals)
    (out / "warps.json").write_text(res.warp.to_json())
    with open(out / "objective_history.csv", "w") as fh:
        fh.write("band_index,step,objective\n")
        for k, (bi, val) in enumerate(res.objective_history):
            fh.write(f"{int(bi)},{k},{float(val)!r}\n")
    d_tilde = apply_warp(u, res.warp, 1.0)
    with open(out / "registered.csv", "w") as fh:
        fh.write("t,d,u,d_tilde\n")
        for t, a, b, c in zip(d.times, d.samples, u.samples, d_tilde.samples):
            fh.write(f"{float(t)!r},{float(a)!r},{float(b)!r},{float(c)!r}\n")
    m0 = registration_misfit(d, u, WarpModel.identity(res.warp.basis))
    m1 = registration_misfit(d, u, res.warp)
    rep = {
        "converged": bool(res.converged),
        "fold_warning": bool(res.fold_warning),
        "misfit_initial": m0,
        "misfit_final": m1,
        "reduction_factor": m0 / m1 if m1 > 0 else float("inf"),
        "lfa": args.lfa,
    }
    _json_dump(rep, out / "report.json")
    print(f"registration misfit {m0:.4e} -> {m1:.4e} "
          f"(x{rep['reduction_factor']:.1f}); converged={res.converged}")
    return 0


def cmd_invert(args) -> int:
    scenario_dir, manifest = _load_scenario_dir(args.scenario)
    from .wave_solver import AcquisitionGeometry

    geometry = AcquisitionGeometry.from_json((scenario_dir / "geometry.json").read_text())
    initial = load_model(scenario_dir / "model_init.f32")
    true_path = scenario_dir / "model_true.f32"
    true_model = load_model(true_path) if true_path.exists() else None
    obs_gathers, wavelet = load_survey(args.obs)
    pml = _pml_from_manifest(manifest)
    f_center = manifest["f_center"]

    sched = experiments.inversion_registration_schedule(f_center)
    aspec = AdjointSourceSpec(mode=args.method, alpha=args.alpha, sched=sched,
                              lfa_kind=args.lfa, stride=args.stride)
    cfg = InversionConfig(
        adjoint_spec=aspec, max_iter=args.max_iter, step_cap=args.step_cap,
        switch_to_ls=args.switch_to_ls, switch_patience=args.switch_patience,
        switch_rel_tol=args.switch_rel_tol, v_bounds=tuple(manifest["v_bounds"]),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "method": args.method, "alpha": args.alpha, "stride": args.stride,
        "lfa": args.lfa, "max_iter": args.max_iter, "step_cap": args.step_cap,
        "switch_to_ls": args.switch_to_ls, "switch_patience": args.switch_patience,
        "switch_rel_tol": args.switch_rel_tol, "v_bounds": manifest["v_bounds"],
        "seed": args.seed, "scenario_dir": str(scenario_dir), "obs_dir": str(args.obs),
        "snapshot_every": args.snapshot_every, "workers": args.workers,
    }
    _json_dump(resolved, out / "resolved_config.json")

    def snapshot_hook(it, model):
        if args.snapshot_every and it % args.snapshot_every == 0:
            save_model(out / f"model_iter_{it:06d}.f32", model)

    dump_hook = None
    if args.dump_adjoint:
        dump_dir = out / "adjoint_dumps"
        dump_dir.mkdir(exist_ok=True)

        def dump_hook(it, residuals, warps_by_shot):
            rec = []
            for si, (resid, warps) in enumerate(zip(residuals, warps_by_shot)):
                resid.data.astype("<f4").tofile(dump_dir / f"resid_it{it:04d}_shot{si:04d}.f32")
                if warps is not None:
                    rec.append([json.loads(w.to_json()) for w in warps])
            if rec:
                _json_dump(rec, dump_dir / f"warps_it{it:04d}.json")

    try:
        final, logbook = invert(
            obs_gathers, geometry, initial, cfg, true_model,
            wavelet=wavelet, nt=manifest["nt"], dt=manifest["dt"], pml=pml,
            dump_hook=dump_hook, snapshot_hook=snapshot_hook,
        )
    except NonFiniteMisfitError as exc:
        logbook = getattr(exc, "logbook", None)
        if logbook is not None:
            logbook.to_csv(out / "convergence.csv")
        print(f"error: {exc}", file=sys.stderr)
        return 3
    logbook.to_csv(out / "convergence.csv")
    save_model(out / "model_final.f32", final)
    final_rms = model_rms(final, true_model) if true_model is not None else float("nan")
    print(f"final J = {logbook.J[-1]:.6e}; final model_rms = {final_rms:.3f} m/s")
    return 0


def cmd_report(args) -> int:
    written = report.write_report(args.run, args.out)
    for p in written:
        print(f"wrote {p}")
    return 0


def _apply_config_file(args, parser_defaults):
    if not args.config:
        return args
    cfg = json.loads(Path(args.config).read_text())
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgls",
        description="Registration-guided least-squares FWI toolkit (2D synthetic transmission)",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file with option defaults")
    common.add_argument("--seed", type=int, default=3, help="random seed")
    common.add_argument("--workers", type=int, default=1,
                        help="parallelism cap (this build computes serially)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--dump-adjoint", action="store_true",
                        help="dump per-iteration warps and residual gathers")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scenario", parents=[common], help="build a synthetic scenario")
    p.add_argument("--case", required=True, help=f"one of {', '.join(experiments.CASE_IDS)}")
    p.add_argument("--scale", type=float, default=1.0, help="desk-scale factor (0, 1]")
    p.add_argument("--noise-sigma", type=float, default=0.075, help="reg2 trace noise std")
    p.add_argument("--f0", type=float, default=None, help="source center frequency override (Hz)")
    p.set_defaults(func=cmd_make_scenario)

    p = sub.add_parser("forward", parents=[common], help="forward-model a survey")
    p.add_argument("--scenario", required=True, help="scenario directory")
    p.add_argument("--model", default=None, help="velocity model file (default: true model)")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("register", parents=[common], help="register traces or gathers")
    p.add_argument("--obs", required=True, help="observed trace file or survey directory")
    p.add_argument("--pred", required=True, help="predicted trace file or survey directory")
    p.add_argument("--bands", default=None, help="comma-separated passband edges (Hz)")
    p.add_argument("--f0", type=float, default=15.0, help="center frequency for the default sweep")
    p.add_argument("--n-bands", type=int, default=_REG_TRACE_DEFAULTS["n_bands"])
    p.add_argument("--high-fraction", type=float, default=_REG_TRACE_DEFAULTS["high_fraction"],
                   help="sweep top as a fraction of f0")
    p.add_argument("--penalty", type=float, default=_REG_TRACE_DEFAULTS["penalty"],
                   help="warp deviation penalty weight")
    p.add_argument("--lfa", choices=("hilbert_sum", "square", "abs"), default="hilbert_sum")
    p.add_argument("--stride", type=int, default=50, help="register every stride-th trace")
    p.add_argument("--n-intervals", type=int, default=_REG_TRACE_DEFAULTS["n_intervals"])
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("invert", parents=[common], help="run LS or RGLS inversion")
    p.add_argument("--scenario", required=True, help="scenario directory")
    p.add_argument("--obs", required=True, help="observed survey directory")
    p.add_argument("--method", choices=("ls", "rgls"), required=True)
    p.add_argument("--alpha", type=float, default=0.1, help="fractional warp amount")
    p.add_argument("--lfa", choices=("hilbert_sum", "square", "abs"), default="hilbert_sum")
    p.add_argument("--stride", type=int, default=50)
    p.add_argument("--max-iter", type=int, default=150)
    p.add_argument("--step-cap", type=float, default=50.0, help="max velocity change per iteration (m/s)")
    p.add_argument("--switch-to-ls", action="store_true",
                   help="switch rgls to ls when the data misfit stalls")
    p.add_argument("--switch-patience", type=int, default=5)
    p.add_argument("--switch-rel-tol", type=float, default=1e-3)
    p.add_argument("--snapshot-every", type=int, default=0,
                   help="write model snapshots every K iterations (0 = off)")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("report", parents=[common], help="render figures and summary CSVs")
    p.add_argument("--run", required=True, help="run or scenario directory to report on")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    defaults = {a.dest: a.default for a in parser._subparsers._group_actions[0]
                .choices[args.command]._actions}
    args = _apply_config_file(args, defaults)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
