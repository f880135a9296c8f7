"""Command-line entry point: ``semloc <verb> ...``."""
import argparse
import json
import logging
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

from .config import ConfigError
from .evaluation import (EvaluationError, ate, format_table, horn_align, read_trajectory, time_align,
                         write_error_curve, write_report, write_trajectory)
from .experiment import (SimulationSettings, experiment_config_from_kv, load_experiment_config,
                         render_frame, run_experiment, save_png, simulate_dataset, write_dataset)
from .floorplan import FloorplanError, read_floorplan, write_floorplan
from .world import SyntheticWorldSpec, WorldError, generate_world

log = logging.getLogger("semloc")


def _add_dataclass_flags(p, cls, prefix=""):
    for f in dc_fields(cls):
        p.add_argument(f"--{prefix}{f.name.replace('_', '-')}", dest=f"{prefix}{f.name}".replace("-", "_"),
                       default=None, metavar="V", help=f"default {f.default!r}")


def _collect(ns, cls, prefix=""):
    out = {}
    for f in dc_fields(cls):
        v = getattr(ns, f"{prefix}{f.name}".replace("-", "_"))
        if v is not None:
            out[f.name] = v
    return out


def _typed(cls, raw):
    # reuse the experiment-file parser so flags and files convert identically
    prefix = {SyntheticWorldSpec: "world_", SimulationSettings: "sim_"}[cls]
    cfg = experiment_config_from_kv({prefix + k: v for k, v in raw.items()})
    return cfg.world if cls is SyntheticWorldSpec else cfg.simulation


def cmd_gen_world(ns):
    spec = _typed(SyntheticWorldSpec, _collect(ns, SyntheticWorldSpec))
    world = generate_world(spec, ns.seed)
    out = Path(ns.out)
    meta = write_floorplan(world.plan, out)
    write_trajectory(out / "groundtruth.csv", world.trajectory)
    print(f"{meta}: {len(world.rooms)} rooms, {len(world.doors)} doors, {len(world.trajectory)} poses")
    return 0


def cmd_simulate(ns):
    plan = read_floorplan(ns.meta)
    truth = read_trajectory(ns.trajectory)
    sim = _typed(SimulationSettings, _collect(ns, SimulationSettings, "sim_"))
    ds = simulate_dataset(plan, truth, sim, ns.seed)
    meta = write_dataset(ds, ns.out)
    print(f"{meta}: {len(ds.scans)} scans of {sim.rays} readings")
    return 0


_EXPERIMENT_FLAGS = ("meta", "occupancy", "labels", "trajectory", "odometry", "scans", "output", "mode",
                     "seeds", "init", "init_sigma_xy", "init_sigma_theta", "max_steps", "align",
                     "converge_threshold", "converge_window", "stop_on_convergence", "render",
                     "frame_stride", "world_seed", "filter_config")


def cmd_localize(ns):
    kv = {k: getattr(ns, k) for k in _EXPERIMENT_FLAGS if getattr(ns, k) is not None}
    for item in ns.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()
    if ns.config:
        # flags are relative to the working directory, not the config file
        for k in ("meta", "occupancy", "labels", "trajectory", "odometry", "scans", "output", "filter_config"):
            if k in kv:
                kv[k] = str(Path(kv[k]).resolve())
        cfg = load_experiment_config(ns.config, kv)
    else:
        cfg = experiment_config_from_kv(kv)
    status = run_experiment(cfg)
    summary = json.loads((cfg.output / "summary.json").read_text())
    overall = summary["overall"]
    if overall:
        print(f"mode={summary['mode']} seeds={len(summary['seeds'])} converged={summary['converged_seeds']} "
              f"rmse={overall['rmse']:.4f} median={overall['median']:.4f}")
    return status


def cmd_evaluate(ns):
    est = read_trajectory(ns.estimate)
    gt = read_trajectory(ns.truth)
    assoc = time_align(est, gt, max_dt=ns.max_dt)
    transform = horn_align(assoc.pairs, with_scale=ns.scale) if ns.align else None
    report = ate(assoc.pairs, transform)
    print(format_table({ns.label: report}))
    if assoc.dropped:
        print(f"{assoc.dropped} estimate poses had no ground-truth partner within {ns.max_dt} s")
    if ns.report:
        write_report(ns.report, report)
    if ns.curve:
        write_error_curve(ns.curve, assoc.pairs, report)
    return 0


def cmd_render(ns):
    plan = read_floorplan(ns.meta)
    trails = []
    if ns.truth:
        trails.append(([(p.pose.x, p.pose.y) for p in read_trajectory(ns.truth)], (0, 200, 0)))
    if ns.estimate:
        trails.append(([(p.pose.x, p.pose.y) for p in read_trajectory(ns.estimate)], (220, 0, 0)))
    save_png(render_frame(plan, scale=ns.scale, trails=trails), ns.out)
    print(ns.out)
    return 0


def cmd_bench(ns):
    from .bench import format_bench, run_bench

    counts = tuple(int(x) for x in ns.particles.split(","))
    rows = run_bench(counts, rays=ns.rays, repeat=ns.repeat, seed=ns.seed)
    print(format_bench(rows))
    if ns.json:
        Path(ns.json).write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="semloc", description="Semantic Monte-Carlo localisation on floorplans.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-world", help="generate a multi-room floorplan and a ground-truth path")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    _add_dataclass_flags(g, SyntheticWorldSpec)
    g.set_defaults(func=cmd_gen_world)

    s = sub.add_parser("simulate", help="simulate odometry and semantic scans along a trajectory")
    s.add_argument("--meta", required=True, help="map yaml")
    s.add_argument("--trajectory", required=True, help="ground truth csv (t,x,y,theta)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    _add_dataclass_flags(s, SimulationSettings, "sim-")
    s.set_defaults(func=cmd_simulate)

    lo = sub.add_parser("localize", help="run a seeded localisation experiment")
    lo.add_argument("config", nargs="?", help="experiment file (key: value lines)")
    for name in _EXPERIMENT_FLAGS:
        lo.add_argument("--" + name.replace("_", "-"), dest=name, default=None)
    lo.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="any experiment key, e.g. filter_sigma_occ=0.5 or sim_fov=2.0")
    lo.set_defaults(func=cmd_localize)

    e = sub.add_parser("evaluate", help="absolute trajectory error of an estimate against ground truth")
    e.add_argument("--estimate", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--max-dt", type=float, default=0.05)
    e.add_argument("--align", action="store_true", help="rigidly align before scoring")
    e.add_argument("--scale", action="store_true", help="also estimate a scale when aligning")
    e.add_argument("--label", default="estimate")
    e.add_argument("--report", help="write the statistics as JSON")
    e.add_argument("--curve", help="write the per-pose error curve as CSV")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("render", help="draw a floorplan with optional trajectories")
    r.add_argument("--meta", required=True)
    r.add_argument("--truth")
    r.add_argument("--estimate")
    r.add_argument("--scale", type=int, default=2)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("bench", help="time the hot paths on both kernel backends")
    b.add_argument("--particles", default="250,5000,50000")
    b.add_argument("--rays", type=int, default=64)
    b.add_argument("--repeat", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", help="also write the rows as JSON")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return ns.func(ns)
    except (ConfigError, FloorplanError, WorldError, EvaluationError, ValueError, OSError) as exc:
        print(f"semloc {ns.verb}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
