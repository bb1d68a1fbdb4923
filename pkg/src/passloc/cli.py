"""Command-line front end: simulate, estimate, crlb, sweep.

Exit codes: 0 on success, 2 for configuration problems (bad flags,
missing or invalid config files), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .channel import make_schedule, measure, save_measurement_set, synthesize_paths, load_measurement_set
from .crlb import crlb_heatmap
from .estimator import EstimatorConfig, run_omp_gcl, run_polar_baseline
from .geometry import sample_scene
from .harness import (
    ExperimentConfig,
    derive_seed,
    run_sweep,
    scenario_layout,
    _STREAM_NOISE,
    _STREAM_SCENE,
    _STREAM_SCHEDULE,
)

CRLB_SCHEMA_VERSION = 1


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "scenario", None):
        cfg.scenarios = (args.scenario,)
        cfg.__post_init__()
    if getattr(args, "snr", None) is not None:
        cfg.snr_db = tuple(args.snr)
        cfg.__post_init__()
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    if getattr(args, "mode", None):
        cfg.mode = args.mode
        cfg.__post_init__()
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    scenario = cfg.scenarios[0]
    snr = cfg.snr_db[0]
    region, radio = cfg.region, cfg.radio
    scene = sample_scene(region, cfg.l, derive_seed(cfg.seed, args.trial, _STREAM_SCENE),
                         mode=cfg.mode, height=cfg.fixed_height)
    layout, total_slots = scenario_layout(cfg, scenario)
    schedule = make_schedule(layout, total_slots, cfg.density,
                             derive_seed(cfg.seed, args.trial, _STREAM_SCHEDULE, scenario, 0))
    paths = synthesize_paths(layout, scene, radio)
    ms = measure(layout, schedule, paths, radio, snr,
                 derive_seed(cfg.seed, args.trial, _STREAM_NOISE, scenario, 0))
    save_measurement_set(args.out, ms, region, layout, schedule, radio, scene=scene)
    print(f"wrote {Path(args.out) / 'measurements.csv'} "
          f"({sum(len(y) for y in ms.y)} observations, scenario={scenario}, snr={snr} dB)")
    return 0


def _cmd_estimate(args) -> int:
    data = load_measurement_set(args.data)
    region, layout, radio = data["region"], data["layout"], data["radio"]
    scene = data["scene"]
    num_paths = args.paths if args.paths else (scene.l + 1 if scene is not None else 1)
    est_cfg = EstimatorConfig(
        region=region, mode=args.mode, num_paths=num_paths,
        g_theta=args.g_theta, max_outer_iters=args.iters,
        fixed_height=args.height, collect_trace=True,
    )
    if layout.m == 1 and args.baseline == "polar":
        result = run_polar_baseline(data["measurements"], layout, radio, est_cfg)
    else:
        result = run_omp_gcl(data["measurements"], layout, radio, est_cfg)
    report = {
        "true_points": None if scene is None else scene.points.tolist(),
        "positions": [p.position.tolist() for p in result.paths],
        "flags": list(result.flags),
        "paths": [
            {
                "path": p.path,
                "position": p.position.tolist(),
                "varphis": p.varphis.tolist(),
                "signs": None if p.signs is None else p.signs.tolist(),
                "anchor_distances": p.distances.tolist(),
                "coefficients": [[c.real, c.imag] for c in p.coefficients],
                "scatter_user_distance": p.scatter_user_distance,
                "absent": p.absent,
                "trace": p.trace,
            }
            for p in result.paths
        ],
    }
    if scene is not None:
        err = np.asarray(result.paths[0].position) - scene.user
        report["user_error_m"] = float(np.linalg.norm(err[:2] if args.mode == "2d" else err))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimate.json").write_text(json.dumps(report, indent=2))
    lines = ["path,x,y,z,absent"]
    for p in result.paths:
        px, py, pz = (float(v) for v in p.position)
        lines.append(f"{p.path},{px!r},{py!r},{pz!r},{int(p.absent)}")
    (out / "positions.csv").write_text("\n".join(lines) + "\n")
    msg = f"wrote {out / 'estimate.json'}"
    if "user_error_m" in report:
        msg += f" (user error {report['user_error_m']:.4g} m)"
    print(msg)
    return 0


def _cmd_crlb(args) -> int:
    cfg = _load_config(args)
    if args.m is not None:
        cfg.m = args.m
    layout, _ = scenario_layout(cfg, cfg.scenarios[0])
    rows = crlb_heatmap(cfg.region, layout.reference_xy, args.sigma**2,
                        grid_n=args.grid, mode=args.bound)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "crlb.csv"
    lines = [f"# passloc crlb v{CRLB_SCHEMA_VERSION}", "x,y,trace_crlb,lambda_min"]
    for x, y, tr, lam in rows:
        lines.append(f"{float(x)!r},{float(y)!r},{float(tr)!r},{float(lam)!r}")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out} ({len(rows)} grid points)")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = run_sweep(cfg)
    result.write_csv(args.out)
    print(f"wrote {Path(args.out) / 'rmse.csv'} and nmse.csv "
          f"({len(cfg.scenarios)} scenarios x {len(cfg.snr_db)} SNRs x {cfg.trials} trials)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passloc",
        description="Pinching-antenna pilot simulation, localization, and bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--scenario", choices=["sw", "mw", "nf", "sw2"])
        p.add_argument("--snr", type=float, nargs="+", help="SNR grid override (dB)")
        p.add_argument("--trials", type=int)
        p.add_argument("--mode", choices=["2d", "3d"])
        if needs_out:
            p.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("simulate", help="synthesize one trial's pilot measurements")
    common(p)
    p.add_argument("--trial", type=int, default=0, help="trial index for seed derivation")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="run localization on stored measurements")
    p.add_argument("--data", required=True, help="directory written by simulate")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["2d", "3d"], default="2d")
    p.add_argument("--paths", type=int, help="number of paths to extract")
    p.add_argument("--g-theta", type=int, default=1024)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--height", type=float, default=0.0, help="known target height (2d mode)")
    p.add_argument("--baseline", choices=["auto", "polar"], default="auto",
                   help="force the polar baseline on single-subarray data")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("crlb", help="bearing-fusion bound heatmap over the region")
    common(p)
    p.add_argument("--m", type=int, help="subarray count override")
    p.add_argument("--sigma", type=float, default=0.01, help="bearing noise std")
    p.add_argument("--grid", type=int, default=60, help="heatmap grid points per axis")
    p.add_argument("--bound", choices=["exact", "paper"], default="exact")
    p.set_defaults(func=_cmd_crlb)

    p = sub.add_parser("sweep", help="full RMSE/NMSE benchmark sweep")
    common(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code is not None else 0

    try:
        cfg_path = getattr(args, "config", None)
        if cfg_path and not Path(cfg_path).exists():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        data_path = getattr(args, "data", None)
        if data_path and not Path(data_path).exists():
            raise FileNotFoundError(f"data directory not found: {data_path}")
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        return args.func(args)
    except (FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
