"""Seeded localisation experiments: datasets, per-seed runs, summaries and frames."""
import csv
import json
import logging
import math
from dataclasses import dataclass, field, fields as dc_fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from . import mcl
from .config import ConfigError, as_bool, fmt_float, read_kv
from .dataset import (OdometryRecord, read_odometry, read_scan_log, write_odometry,
                      write_scan_log)
from .evaluation import (AteReport, RigidTransform2D, TimedPose, ate, horn_align, read_trajectory,
                         time_align, write_trajectory)
from .fields import build_fields
from .floorplan import read_floorplan, write_floorplan
from .geometry import wrap_angle
from .mcl import FilterConfig, FilterDivergence, Mode
from .sensor import (DEFAULT_FOV, DEFAULT_MAX_RANGE, DEFAULT_RAYS, SensorNoise, bearings_for_camera,
                     simulate_scan, strip_ranges)
from .world import SyntheticWorldSpec, generate_world

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationSettings:
    """How synthetic scans and odometry are produced from a ground-truth path."""

    fov: float = DEFAULT_FOV
    rays: int = DEFAULT_RAYS
    bearing_model: str = "pinhole"
    max_range: float = DEFAULT_MAX_RANGE
    range_sigma: float = 0.02
    label_error: float = 0.05
    dropout: float = 0.02
    odom_sigma_trans: float = 0.01  # metres per step
    odom_sigma_rot: float = 0.01  # radians per step

    def noise(self):
        return SensorNoise.with_label_error(self.label_error, self.range_sigma, self.dropout)


@dataclass(frozen=True, eq=False)
class Dataset:
    plan: object
    truth: list
    odometry: list
    scans: list

    def __post_init__(self):
        n = len(self.truth)
        if n == 0 or len(self.odometry) != n or len(self.scans) != n:
            raise ConfigError(
                f"dataset lengths differ: truth {n}, odometry {len(self.odometry)}, scans {len(self.scans)}"
            )


def simulate_dataset(plan, truth, settings=SimulationSettings(), seed=0):
    """Noisy odometry and scans along ``truth``; row k of the odometry is the motion into pose k."""
    bearings = bearings_for_camera(settings.fov, settings.rays, settings.bearing_model)
    noise = settings.noise()
    rng = np.random.default_rng([seed, 7])
    odo = [OdometryRecord(truth[0].t, 0.0, 0.0, 0.0)]
    for a, b in zip(truth, truth[1:]):
        rel = a.pose.inverse().compose(b.pose)
        e = rng.normal(0.0, 1.0, 3)
        odo.append(OdometryRecord(
            b.t,
            rel.x + settings.odom_sigma_trans * e[0],
            rel.y + settings.odom_sigma_trans * e[1],
            wrap_angle(rel.theta + settings.odom_sigma_rot * e[2]),
        ))
    scans = [
        simulate_scan(plan, tp.pose, bearings, noise, settings.max_range,
                      rng_seed=[seed, 11, k], timestamp=tp.t)
        for k, tp in enumerate(truth)
    ]
    return Dataset(plan, list(truth), odo, scans)


def write_dataset(ds, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = write_floorplan(ds.plan, directory)
    write_trajectory(directory / "groundtruth.csv", ds.truth)
    write_odometry(directory / "odometry.csv", ds.odometry)
    write_scan_log(directory / "scans.txt", ds.scans)
    return meta


@dataclass(frozen=True)
class ExperimentConfig:
    # map files; when absent a world is generated from ``world``
    meta: Optional[Path] = None
    occupancy: Optional[Path] = None
    labels: Optional[Path] = None
    # recorded dataset; when absent it is simulated along the ground truth
    trajectory: Optional[Path] = None
    odometry: Optional[Path] = None
    scans: Optional[Path] = None
    world: SyntheticWorldSpec = field(default_factory=SyntheticWorldSpec)
    world_seed: Optional[int] = None  # None: a fresh world per run seed
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    filter: FilterConfig = field(default_factory=FilterConfig)
    mode: Mode = Mode.COMBINED
    seeds: tuple = (0,)
    output: Path = Path("out")
    init: str = "global"  # or "room"
    init_sigma_xy: float = 2.0
    init_sigma_theta: float = 2.0
    max_steps: Optional[int] = None
    align: bool = False  # Horn-align the whole run before computing errors
    converge_threshold: float = 0.25
    converge_window: int = 20
    stop_on_convergence: bool = False
    render: bool = False
    frame_stride: int = 10

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.init not in ("global", "room"):
            raise ConfigError("init must be 'global' or 'room'")
        if self.frame_stride < 1:
            raise ConfigError("frame_stride must be >= 1")
        for name in ("meta", "occupancy", "labels", "trajectory", "odometry", "scans"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, Path(v))
        object.__setattr__(self, "output", Path(self.output))

    def check_paths(self):
        for name in ("meta", "occupancy", "labels", "trajectory", "odometry", "scans"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ConfigError(f"{name} path does not exist: {p}")
        if (self.odometry is None) != (self.scans is None):
            raise ConfigError("odometry and scans must be given together")
        if self.scans is not None and (self.trajectory is None or self.meta is None):
            raise ConfigError("a recorded dataset needs a map and a ground-truth trajectory")


_WORLD_KEYS = {f"world_{f.name}": f for f in dc_fields(SyntheticWorldSpec)}
_SIM_KEYS = {f"sim_{f.name}": f for f in dc_fields(SimulationSettings)}
_PATH_KEYS = ("meta", "occupancy", "labels", "trajectory", "odometry", "scans", "output")


def _convert(f, value):
    typ = str(f.type)
    if "bool" in typ:
        return as_bool(value)
    if "int" in typ and "Optional" not in typ:
        return int(value)
    if "Optional[int]" in typ:
        return None if value.lower() in ("", "none") else int(value)
    if "float" in typ:
        return float(value)
    return value


def load_experiment_config(path, overrides=None):
    """Read an experiment file; relative paths resolve against the file's directory."""
    path = Path(path)
    kv = dict(read_kv(path))
    kv.update(overrides or {})
    base = path.parent
    return experiment_config_from_kv(kv, base)


def experiment_config_from_kv(kv, base=Path(".")):
    kv = {k: v for k, v in kv.items() if v is not None}
    args, world, sim = {}, {}, {}
    filt = FilterConfig()
    if "filter_config" in kv:
        filt = mcl.read_filter_config(base / kv.pop("filter_config"))
    inline = {k[7:]: str(kv.pop(k)) for k in list(kv) if k.startswith("filter_")}
    if inline:
        filt = FilterConfig.from_kv({**filt.to_kv(), **inline})
    own = {f.name: f for f in dc_fields(ExperimentConfig)}
    for key, value in kv.items():
        value = str(value)
        if key in _WORLD_KEYS:
            world[key[6:]] = _convert(_WORLD_KEYS[key], value)
        elif key in _SIM_KEYS:
            sim[key[4:]] = _convert(_SIM_KEYS[key], value)
        elif key in _PATH_KEYS:
            args[key] = base / value
        elif key == "seeds":
            args["seeds"] = tuple(int(s) for s in value.replace(",", " ").split())
        elif key == "mode":
            args["mode"] = Mode.parse(value)
        elif key in own and key not in ("world", "simulation", "filter"):
            args[key] = _convert(own[key], value)
        else:
            raise ConfigError(f"unknown experiment key {key!r}")
    try:
        args["world"] = SyntheticWorldSpec(**world)
        args["simulation"] = SimulationSettings(**sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    mode = args.get("mode", filt.mode)
    args["mode"] = mode
    args["filter"] = replace(filt, mode=mode)
    return ExperimentConfig(**args)


def load_dataset(cfg, seed):
    """Dataset for one run seed: recorded files, or a generated world and simulation."""
    if cfg.meta is not None:
        plan = read_floorplan(cfg.meta, cfg.occupancy, cfg.labels)
        if cfg.trajectory is None:
            raise ConfigError("a map file needs a ground-truth trajectory")
        truth = read_trajectory(cfg.trajectory)
        if cfg.scans is not None:
            return Dataset(plan, truth, read_odometry(cfg.odometry), read_scan_log(cfg.scans))
        return simulate_dataset(plan, truth, cfg.simulation, seed)
    world_seed = seed if cfg.world_seed is None else cfg.world_seed
    world = generate_world(cfg.world, world_seed)
    return simulate_dataset(world.plan, world.trajectory, cfg.simulation, world_seed)


@dataclass
class SeedResult:
    seed: int
    records: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    report: Optional[AteReport] = None
    convergence_step: Optional[int] = None
    covariance_step: Optional[int] = None  # first step the filter reported a tight cloud
    reinitialisations: int = 0
    failure: Optional[str] = None


def convergence_step(errors, threshold=0.25, window=20):
    """First step that starts ``window`` consecutive errors below ``threshold``."""
    run = 0
    for k, e in enumerate(errors):
        run = run + 1 if e < threshold else 0
        if run == window:
            return k - window + 1
    return None


def _initial_state(cfg, ds, fields, seed):
    f = cfg.filter
    if cfg.init == "room":
        return mcl.init_room(ds.truth[0].pose, cfg.init_sigma_xy, cfg.init_sigma_theta, f.max_particles,
                             seed=seed, min_particles=f.min_particles, convergence_det=f.convergence_det)
    return mcl.init_global(ds.plan, fields, f.max_particles, seed=seed, min_particles=f.min_particles,
                           convergence_det=f.convergence_det)


def run_seed(cfg, seed, ds=None, frames_dir=None):
    """Replay one dataset through the filter."""
    ds = ds if ds is not None else load_dataset(cfg, seed)
    f = cfg.filter
    fields = build_fields(ds.plan, f.sensor.sigma_occ, f.sigma_base)
    out = SeedResult(seed)
    state = _initial_state(cfg, ds, fields, seed)
    n_steps = len(ds.truth) if cfg.max_steps is None else min(cfg.max_steps, len(ds.truth))
    run = 0
    for k in range(n_steps):
        odom = None if k == 0 else ds.odometry[k].delta()
        scan = ds.scans[k]
        if cfg.mode is Mode.RAY:
            scan = strip_ranges(scan)  # the ray pipeline never sees a range
        try:
            state, pose, _ = mcl.step(state, odom, scan, cfg.mode, ds.plan, fields, f)
        except FilterDivergence:
            out.reinitialisations += 1
            state = replace(mcl.init_global(ds.plan, fields, f.max_particles,
                                            seed=mcl._stream(seed, k, 99), min_particles=f.min_particles,
                                            convergence_det=f.convergence_det), rng_seed=seed, steps=k + 1)
            pose, _ = mcl.estimate_pose(state)
        if state.converged and out.covariance_step is None:
            out.covariance_step = k
        truth = ds.truth[k]
        out.estimates.append(TimedPose(truth.t, pose))
        out.records.append({"step": k, "t": truth.t, "ess": state.ess, "n_particles": len(state.particles)})
        if frames_dir is not None and k % cfg.frame_stride == 0:
            frames_dir.mkdir(parents=True, exist_ok=True)
            save_png(render_frame(ds.plan, state.particles, truth.pose, pose), frames_dir / f"frame_{k}.png")
        if cfg.stop_on_convergence and not cfg.align:
            e = math.hypot(pose.x - truth.pose.x, pose.y - truth.pose.y)
            run = run + 1 if e < cfg.converge_threshold else 0
            if run == cfg.converge_window:
                break

    pairs = time_align(out.estimates, ds.truth[: len(out.estimates)], max_dt=1e-9)
    transform = horn_align(pairs) if cfg.align else RigidTransform2D()
    out.report = ate(pairs, transform)
    for rec, e, h in zip(out.records, out.report.per_step_error, out.report.heading_error):
        rec["ate_m"] = e
        rec["heading_err_rad"] = h
    out.convergence_step = convergence_step(out.report.per_step_error, cfg.converge_threshold,
                                            cfg.converge_window)
    return out


ERROR_COLUMNS = ("step", "t", "ate_m", "heading_err_rad", "ess", "n_particles")


def write_errors_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ERROR_COLUMNS)
        for r in records:
            w.writerow([r["step"], fmt_float(r["t"]), fmt_float(r["ate_m"]),
                        fmt_float(r["heading_err_rad"]), fmt_float(r["ess"]), r["n_particles"]])


def read_errors_csv(path):
    with open(path, newline="") as fh:
        return [float(r["ate_m"]) for r in csv.DictReader(fh)]


def _json_float(v):
    return None if v is None or not math.isfinite(v) else v


def run_experiment(cfg):
    """Run every seed, writing per-seed CSVs, estimates, frames and ``summary.json``.

    A failing seed is recorded and skipped. Returns 0 when all seeds ran.
    """
    cfg.check_paths()
    outdir = cfg.output
    outdir.mkdir(parents=True, exist_ok=True)
    per_seed, all_errors, conv = {}, [], []
    status = 0
    for seed in cfg.seeds:
        frames = outdir / "frames" / f"seed_{seed}" if cfg.render else None
        try:
            res = run_seed(cfg, seed, frames_dir=frames)
        except Exception as exc:  # any component error aborts only this seed
            log.exception("seed %d failed", seed)
            per_seed[str(seed)] = {"failure": f"{type(exc).__name__}: {exc}"}
            status = 1
            continue
        write_errors_csv(outdir / f"errors_{seed}.csv", res.records)
        write_trajectory(outdir / f"estimate_{seed}.csv", res.estimates)
        all_errors += res.report.per_step_error
        if res.convergence_step is not None:
            conv.append(res.convergence_step)
        per_seed[str(seed)] = {
            "summary": res.report.summary(),
            "convergence_step": res.convergence_step,
            "covariance_convergence_step": res.covariance_step,
            "steps": len(res.records),
            "reinitialisations": res.reinitialisations,
            "failure": None,
        }
    summary = {
        "mode": cfg.mode.value,
        "init": cfg.init,
        "ghost_factor": cfg.filter.sensor.ghost_factor,
        "eps_rng": cfg.filter.sensor.eps_rng,
        "eps_lbl": cfg.filter.sensor.eps_lbl,
        "align": cfg.align,
        "converge_threshold": cfg.converge_threshold,
        "converge_window": cfg.converge_window,
        "seeds": per_seed,
        "converged_seeds": len(conv),
        "median_convergence_step": _json_float(float(np.median(conv))) if conv else None,
        "overall": AteReport.from_errors(all_errors).summary() if all_errors else None,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return status


# -- rendering --------------------------------------------------------------------

_TINT = {1: (90, 90, 90), 2: (0, 170, 60), 3: (30, 110, 230)}


def render_frame(plan, particles=None, truth_pose=None, estimate=None, scale=2, trails=()):
    """RGB frame: greyscale map, tinted labels, particles, truth (green) and estimate (red).

    ``trails`` is a sequence of ``(xy, rgb)`` pairs drawn as point paths under the markers.
    """
    grey = np.rint(255.0 * (1.0 - plan.occupancy)).astype(np.uint8)
    img = np.repeat(grey[:, :, None], 3, axis=2)
    for code, rgb in _TINT.items():
        img[plan.label_codes == code] = rgb
    img = np.kron(img, np.ones((scale, scale, 1), dtype=np.uint8))
    h, w = img.shape[:2]
    px_per_m = scale / plan.resolution
    ox, oy, oth = plan.origin
    c, s = math.cos(oth), math.sin(oth)

    def to_px(x, y):
        dx, dy = np.asarray(x) - ox, np.asarray(y) - oy
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        return np.floor(lx * px_per_m).astype(np.int64), (h - 1 - np.floor(ly * px_per_m)).astype(np.int64)

    def put(u, v, rgb):
        ok = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        img[v[ok], u[ok]] = rgb

    for xy, rgb in trails:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        u, v = to_px(xy[:, 0], xy[:, 1])
        put(u, v, rgb)
    if particles is not None and len(particles):
        p = particles.poses
        u, v = to_px(p[:, 0], p[:, 1])
        tip = 1.5 * plan.resolution
        ut, vt = to_px(p[:, 0] + tip * np.cos(p[:, 2]), p[:, 1] + tip * np.sin(p[:, 2]))
        put(ut, vt, (255, 200, 120))
        put(u, v, (230, 120, 0))
    for pose, rgb in ((truth_pose, (0, 200, 0)), (estimate, (220, 0, 0))):
        if pose is None:
            continue
        u, v = to_px(pose.x, pose.y)
        offs = np.arange(-3 * scale, 3 * scale + 1)
        put(u + offs, np.full_like(offs, v), rgb)
        put(np.full_like(offs, u), v + offs, rgb)
    return img


def save_png(img, path):
    Image.fromarray(img).save(path, format="PNG")
