"""Experiment orchestration: scenarios, trials, metrics, and sweep outputs.

A sweep runs one or more deployment scenarios over an SNR grid with
paired scenes: the scene seed depends only on the master seed and the
trial index, so every scenario at every SNR sees the same user and
scatterer draws and per-trial comparisons are paired. Schedule and noise
seeds additionally fold in the scenario and SNR so streams never alias.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .channel import (
    RadioConfig,
    channel_vector,
    make_schedule,
    measure,
    synthesize_paths,
)
from .estimator import EstimatorConfig, run_omp_gcl, run_polar_baseline
from .geometry import (
    ArrayLayout,
    ServiceRegion,
    Structure,
    build_mw_layout,
    build_sw_layout,
    custom_layout,
    sample_scene,
)

SWEEP_SCHEMA_VERSION = 1

SCENARIOS = ("sw", "mw", "nf", "sw2")
_SCENARIO_CODE = {name: i + 1 for i, name in enumerate(SCENARIOS)}
_STREAM_SCENE, _STREAM_SCHEDULE, _STREAM_NOISE = 0, 1, 2

DEFAULT_SNR_GRID = (5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0)


@dataclass
class ExperimentConfig:
    """Declarative description of a sweep; serializes to/from JSON."""

    scenarios: tuple = ("mw",)
    mode: str = "2d"
    m: int = 3
    n: int = 32
    d: float | None = None  # None -> half wavelength
    frequency: float = 28e9
    n_eff: float = 1.4
    p0: float = 1.0
    size_x: float = 30.0
    size_y: float = 30.0
    h_pa: float = 2.0
    h_range: tuple = (0.0, 0.0)
    fixed_height: float = 0.0
    l: int = 0
    slots_per_subarray: int = 64
    density: float = 0.5
    snr_db: tuple = DEFAULT_SNR_GRID
    trials: int = 500
    seed: int = 0
    g_theta: int = 1024
    iters: int = 3
    epsilon: float = 1e-9
    lambda_penalty: float = 1.0
    move_tol: float = 1e-3
    grid_clip: float = 1e-3
    coeff_floor: float = 1e-3
    nf_n: int = 96
    nf_rings: int = 16
    keep_records: bool = False

    def __post_init__(self):
        scen = tuple(str(s).lower() for s in (
            self.scenarios if isinstance(self.scenarios, (list, tuple)) else [self.scenarios]
        ))
        for s in scen:
            if s not in SCENARIOS:
                raise ValueError(f"unknown scenario '{s}'; pick from {SCENARIOS}")
        self.scenarios = scen
        if self.mode not in ("2d", "3d"):
            raise ValueError("mode must be '2d' or '3d'")
        self.snr_db = tuple(float(v) for v in (
            self.snr_db if isinstance(self.snr_db, (list, tuple)) else [self.snr_db]
        ))
        self.h_range = (float(self.h_range[0]), float(self.h_range[1]))

    @property
    def region(self) -> ServiceRegion:
        return ServiceRegion(self.size_x, self.size_y, self.h_pa, self.h_range)

    @property
    def radio(self) -> RadioConfig:
        return RadioConfig(self.frequency, self.n_eff, self.p0)

    @property
    def spacing(self) -> float:
        return self.radio.wavelength / 2.0 if self.d is None else float(self.d)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(
            region=self.region,
            mode=self.mode,
            num_paths=self.l + 1,
            max_outer_iters=self.iters,
            g_theta=self.g_theta,
            epsilon=self.epsilon,
            lambda_penalty=self.lambda_penalty,
            move_tol=self.move_tol,
            grid_clip=self.grid_clip,
            fixed_height=self.fixed_height,
            coeff_floor=self.coeff_floor,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenarios"] = list(self.scenarios)
        d["snr_db"] = list(self.snr_db)
        d["h_range"] = list(self.h_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def rmse(errors) -> float:
    """Root of the mean squared error magnitude."""
    e = np.asarray(errors, dtype=float).reshape(-1)
    if e.size == 0:
        raise ValueError("no errors to aggregate")
    return float(np.sqrt(np.mean(e * e)))


def nmse(h_true, h_est) -> float:
    """Linear normalized squared error ||h_est - h_true||^2 / ||h_true||^2."""
    t = np.asarray(h_true).reshape(-1)
    e = np.asarray(h_est).reshape(-1)
    if t.shape != e.shape:
        raise ValueError("channel vectors must have matching length")
    denom = float(np.vdot(t, t).real)
    if denom == 0.0:
        raise ValueError("true channel has zero energy")
    diff = e - t
    return float(np.vdot(diff, diff).real) / denom


def to_db(value: float, floor_db: float = -120.0) -> float:
    """10*log10 with a reporting floor for exact zeros / tiny values."""
    if value <= 10.0 ** (floor_db / 10.0):
        return floor_db
    return float(10.0 * np.log10(value))


def scenario_layout(cfg: ExperimentConfig, scenario: str) -> tuple[ArrayLayout, int]:
    """Layout and total pilot slot count for a scenario under a config."""
    region, d = cfg.region, cfg.spacing
    if scenario == "mw":
        layout = build_mw_layout(region, cfg.m, cfg.n, d)
        return layout, cfg.slots_per_subarray
    if scenario == "sw":
        layout = build_sw_layout(region, cfg.m, cfg.n, d)
        return layout, cfg.slots_per_subarray * cfg.m
    if scenario == "sw2":
        layout = build_sw_layout(region, 2, cfg.n, d)
        return layout, cfg.slots_per_subarray * 2
    if scenario == "nf":
        layout = custom_layout(region, Structure.SW, [(0.0, region.size_y / 2.0)], cfg.nf_n, d)
        return layout, cfg.slots_per_subarray
    raise ValueError(f"unknown scenario '{scenario}'")


def derive_seed(master: int, trial: int, stream: int, scenario: str = "", snr_index: int = 0) -> int:
    """Documented seed-splitting: scene streams ignore scenario and SNR."""
    entropy = [int(master), int(trial), int(stream)]
    if stream != _STREAM_SCENE:
        entropy += [_SCENARIO_CODE.get(scenario, 0), int(snr_index)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass
class TrialRecord:
    """Forensic record of one (scenario, SNR, trial) estimation."""

    scenario: str
    snr_db: float
    trial: int
    scene_points: list
    positions: list
    position_error: float
    path_errors: list
    nmse_linear: float
    flags: tuple
    wall_time_s: float
    failed: bool = False
    error_message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _position_error(true_point, est_point, mode: str) -> float:
    t = np.asarray(true_point, dtype=float)
    e = np.asarray(est_point, dtype=float)
    if mode == "2d":
        return float(np.hypot(*(e[:2] - t[:2])))
    return float(np.linalg.norm(e - t))


def run_trial(cfg: ExperimentConfig, scenario: str, snr_db: float, snr_index: int,
              trial: int, polar_cache: dict | None = None) -> TrialRecord:
    """One end-to-end trial; estimator failures come back as flagged records."""
    region, radio = cfg.region, cfg.radio
    scene = sample_scene(
        region, cfg.l, derive_seed(cfg.seed, trial, _STREAM_SCENE),
        mode=cfg.mode, height=cfg.fixed_height,
    )
    layout, total_slots = scenario_layout(cfg, scenario)
    schedule = make_schedule(
        layout, total_slots, cfg.density,
        derive_seed(cfg.seed, trial, _STREAM_SCHEDULE, scenario, snr_index),
    )
    paths = synthesize_paths(layout, scene, radio)
    ms = measure(
        layout, schedule, paths, radio, snr_db,
        derive_seed(cfg.seed, trial, _STREAM_NOISE, scenario, snr_index),
    )
    est_cfg = cfg.estimator_config()
    t0 = time.perf_counter()
    try:
        if scenario == "nf":
            cache_key = (scenario, cfg.mode)
            dic = polar_cache.get(cache_key) if polar_cache is not None else None
            result = run_polar_baseline(ms, layout, radio, est_cfg, channel_dictionary=dic)
        else:
            result = run_omp_gcl(ms, layout, radio, est_cfg)
    except Exception as exc:  # record, do not abort the sweep
        return TrialRecord(
            scenario=scenario, snr_db=snr_db, trial=trial,
            scene_points=scene.points.tolist(), positions=[],
            position_error=float("nan"), path_errors=[], nmse_linear=float("nan"),
            flags=("trial-failed",), wall_time_s=time.perf_counter() - t0,
            failed=True, error_message=f"{type(exc).__name__}: {exc}",
        )
    wall = time.perf_counter() - t0

    err_user = _position_error(scene.user, result.paths[0].position, cfg.mode)
    path_errors = [err_user]
    live = [p for p in result.paths[1:] if not p.absent]
    remaining = list(range(scene.l))
    for p in live:  # greedy nearest-truth matching for scattered paths
        if not remaining:
            break
        dists = [_position_error(scene.scatterers[i], p.position, cfg.mode) for i in remaining]
        k = int(np.argmin(dists))
        path_errors.append(float(dists[k]))
        remaining.pop(k)

    h_true = np.concatenate([channel_vector(pm) for pm in paths])
    h_est = np.concatenate(result.channels)
    return TrialRecord(
        scenario=scenario, snr_db=snr_db, trial=trial,
        scene_points=scene.points.tolist(),
        positions=[p.position.tolist() for p in result.paths],
        position_error=err_user, path_errors=path_errors,
        nmse_linear=nmse(h_true, h_est), flags=result.flags, wall_time_s=wall,
    )


@dataclass
class SweepResult:
    """Aggregates plus optional per-trial records."""

    config: ExperimentConfig
    rmse_rows: list = field(default_factory=list)
    nmse_rows: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def write_csv(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"# passloc sweep v{SWEEP_SCHEMA_VERSION}",
                 "scenario,snr_db,rmse_m,median_m,flag_rate,total_slots"]
        for r in self.rmse_rows:
            lines.append(
                f"{r['scenario']},{r['snr_db']!r},{r['rmse_m']!r},"
                f"{r['median_m']!r},{r['flag_rate']!r},{r['total_slots']}"
            )
        (out / "rmse.csv").write_text("\n".join(lines) + "\n")
        lines = [f"# passloc sweep v{SWEEP_SCHEMA_VERSION}", "scenario,snr_db,nmse_db"]
        for r in self.nmse_rows:
            lines.append(f"{r['scenario']},{r['snr_db']!r},{r['nmse_db']!r}")
        (out / "nmse.csv").write_text("\n".join(lines) + "\n")
        meta = {
            "version": SWEEP_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "trials": self.config.trials,
            "failed_trials": sum(1 for rec in self.records if rec.failed)
            if self.records else None,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2))


def run_sweep(cfg: ExperimentConfig, progress=None) -> SweepResult:
    """Full sweep over scenarios, SNR grid, and paired trials.

    Aggregates per (scenario, SNR): RMSE and median of the user position
    error over non-failed trials, the flag rate (any flag or failure),
    linear-mean NMSE in dB, and the pilot slot count. Per-trial records
    are kept when cfg.keep_records is set. Raises if more than half the
    trials of any cell fail.
    """
    result = SweepResult(config=cfg)
    polar_cache: dict = {}
    if "nf" in cfg.scenarios:
        # channel-domain atoms are scene-independent; build once
        from .dictionary import AngleGrid, build_polar_dictionary, default_polar_rings

        layout, _ = scenario_layout(cfg, "nf")
        grid = AngleGrid.uniform_cosine(cfg.g_theta, cfg.grid_clip)
        rings = default_polar_rings(cfg.region, cfg.nf_rings)
        polar_cache[("nf", cfg.mode)] = build_polar_dictionary(
            layout.subarrays[0], cfg.radio, grid, rings, mode="2d",
            dh=cfg.h_pa - cfg.fixed_height, index=0,
        )
    for scenario in cfg.scenarios:
        _, total_slots = scenario_layout(cfg, scenario)
        for snr_index, snr in enumerate(cfg.snr_db):
            records = []
            for trial in range(cfg.trials):
                rec = run_trial(cfg, scenario, snr, snr_index, trial, polar_cache)
                records.append(rec)
                if progress is not None:
                    progress(rec)
            ok = [r for r in records if not r.failed]
            if len(ok) < cfg.trials / 2:
                raise RuntimeError(
                    f"scenario {scenario} at {snr} dB: {cfg.trials - len(ok)} of "
                    f"{cfg.trials} trials failed"
                )
            errors = np.array([r.position_error for r in ok])
            flag_rate = float(np.mean([bool(r.flags) or r.failed for r in records]))
            result.rmse_rows.append({
                "scenario": scenario, "snr_db": snr, "rmse_m": rmse(errors),
                "median_m": float(np.median(errors)), "flag_rate": flag_rate,
                "total_slots": total_slots,
            })
            result.nmse_rows.append({
                "scenario": scenario, "snr_db": snr,
                "nmse_db": to_db(float(np.mean([r.nmse_linear for r in ok]))),
            })
            if cfg.keep_records:
                result.records.extend(records)
    return result
