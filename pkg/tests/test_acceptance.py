"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary of any pytest run that includes this module.
"""
import math
import time
from dataclasses import replace

import numpy as np

from semloc import mcl
from semloc.bench import run_bench
from semloc.evaluation import RigidTransform2D, TimedPose, ate, horn_align, time_align
from semloc.experiment import ExperimentConfig, SimulationSettings, run_experiment, run_seed
from semloc.fields import OCCUPANCY, build_distance_map, build_fields
from semloc.floorplan import Label
from semloc.geometry import Pose2D
from semloc.mcl import FilterConfig, FilterState, ParticleSet, SensorModelConfig
from semloc.sensor import SemanticReading, SemanticScan, raycast
from semloc.world import SyntheticWorldSpec

from conftest import plan_from_codes, random_plan
from oracles import brute_force_vectorised, cell_chord, likelihood_field_reference, march_raycast, slab_raycast

RESULTS = {}

# shared desk-scale setup for the convergence and ghost-factor criteria
WORLD = SyntheticWorldSpec()  # 200 x 200 cells at 0.05 m, 8 rooms
SIM = SimulationSettings(fov=2.0, rays=32)
SEEDS = tuple(range(20))


def report(n, ok, detail, gated=True):
    tag = ("PASS" if ok else "FAIL") if gated else ("PASS" if ok else "MISS") + " (soft)"
    line = f"acceptance {n:2d}: {tag}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def state_of(poses):
    return FilterState(ParticleSet.uniform(np.asarray(poses, dtype=np.float64)), 1, len(poses))


def test_1_ghost_anchors():
    t0 = time.perf_counter()
    a, b = math.exp(-3.0 * 1.0), math.exp(-7.0 * 0.43)
    ok = 0.0497 <= a <= 0.0499 and 0.048 <= b <= 0.050
    dt = time.perf_counter() - t0
    assert report(1, ok and dt < 1, f"exp(-3*1.0)={a:.5f} exp(-7*0.43)={b:.5f} ({dt:.3f} s)")


def test_2_distance_map_oracle():
    t0 = time.perf_counter()
    checked = mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        plan = random_plan(rng, (64, 64), rng.uniform(0.02, 0.3), resolution=0.05)
        for src in (OCCUPANCY,) + tuple(Label):
            mask = plan.occupied if src == OCCUPANCY else plan.label_codes == int(src)
            if not mask.any():
                continue
            checked += 1
            if not np.array_equal(build_distance_map(plan, src).values, brute_force_vectorised(mask, 0.05)):
                mismatches += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and checked >= 190 and dt < 30
    assert report(2, ok, f"{checked} maps bit-exact except {mismatches} ({dt:.1f} s)")


def test_3_raycast_oracle():
    """Amanatides-Woo traversal against the res/20 marcher on 1000 random rays.

    The marcher samples points, so it can step over a corner of a cell that the
    ray clips for less than its step length. Such a case only counts as
    explained when the exact slab-intersection oracle confirms our answer and
    the clipped chord is shorter than the marching step.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    res = 0.05
    agree = explained = unexplained = 0
    worst = 0.0
    for _ in range(1000):
        plan = random_plan(rng, (48, 48), rng.uniform(0.02, 0.3), resolution=res)
        free = np.argwhere(~plan.occupied)
        r, c = free[rng.integers(len(free))]
        pose = Pose2D((c + rng.random()) * res, (r + rng.random()) * res, rng.uniform(-math.pi, math.pi))
        bearing = rng.uniform(-1.0, 1.0)
        max_range = 10.0  # past the map diagonal: every miss is a map exit
        ours = raycast(plan, pose, bearing, max_range)
        march = march_raycast(plan, pose, bearing, max_range)
        ours_cell = None if ours is None else (ours.cell.col, ours.cell.row)
        march_cell = None if march is None else march[:2]
        if ours_cell == march_cell:
            agree += 1
            if ours is not None:
                worst = max(worst, abs(ours.range - march[2]))
            continue
        slab = slab_raycast(plan, pose, bearing, max_range)
        slab_cell = None if slab is None else slab[:2]
        if ours_cell is not None and slab_cell == ours_cell and cell_chord(plan, pose, bearing, ours_cell) < res / 20:
            explained += 1
        else:
            unexplained += 1
    dt = time.perf_counter() - t0
    ok = unexplained == 0 and worst <= res * math.sqrt(2) and dt < 30
    assert report(3, ok, f"{agree}/1000 agree, {explained} corner clips under the marching step "
                         f"(exact oracle agrees), {unexplained} unexplained; max range gap {worst:.4f} m ({dt:.1f} s)")


def test_4_horn_ate_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    xy = np.cumsum(rng.normal(0, 0.2, (200, 2)), axis=0)
    gt = [TimedPose(0.1 * k, Pose2D(float(x), float(y), float(rng.uniform(-3, 3)))) for k, (x, y) in enumerate(xy)]
    tf = RigidTransform2D(float(rng.uniform(-math.pi, math.pi)), tuple(float(v) for v in rng.uniform(-20, 20, 2)))
    # estimate = tf^-1(gt): horn must recover tf itself
    c, s = math.cos(tf.rotation), math.sin(tf.rotation)
    inv = RigidTransform2D(-tf.rotation, (-(c * tf.translation[0] + s * tf.translation[1]),
                                          -(-s * tf.translation[0] + c * tf.translation[1])))
    est = [TimedPose(p.t, inv.apply_pose(p.pose)) for p in gt]
    got = horn_align(time_align(est, gt).pairs)
    rot_err = abs(math.remainder(got.rotation - tf.rotation, 2 * math.pi))
    trans_err = math.hypot(got.translation[0] - tf.translation[0], got.translation[1] - tf.translation[1])
    same = ate(time_align(gt, gt).pairs)
    noisy = [TimedPose(p.t, Pose2D(p.pose.x + rng.normal(0, 0.1), p.pose.y, p.pose.theta)) for p in gt]
    rep = ate(time_align(noisy, gt).pairs)
    e = np.asarray(rep.per_step_error)
    rmse_gap = abs(rep.rmse ** 2 - float(np.mean(e * e)))
    dt = time.perf_counter() - t0
    ok = rot_err < 1e-9 and trans_err < 1e-9 and same.rmse == 0.0 and same.max == 0.0 and rmse_gap <= 1e-12 and dt < 5
    assert report(4, ok, f"rotation err {rot_err:.1e} rad, translation err {trans_err:.1e} m, "
                         f"ATE(identical)={same.rmse}, |rmse^2-mean e^2|={rmse_gap:.1e} ({dt:.2f} s)")


def _random_scan(rng, k, labels=True):
    b = np.linspace(-0.6, 0.6, k) + rng.uniform(-0.01, 0.01, k)
    return SemanticScan(tuple(
        SemanticReading(float(bi), float(rng.uniform(0.05, 3.0)),
                     rng.choice([None, Label.WALL, Label.DOOR, Label.WINDOW]) if labels else None)
        for bi in b
    ))


def test_5_sensor_degenerate_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    changed = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        plan = random_plan(rng, (50, 60), rng.uniform(0.02, 0.2), resolution=0.05)
        plan = plan_from_codes(plan.label_codes, 0.05, origin=tuple(rng.uniform(-1, 1, 3)))
        fields = build_fields(plan, sigma_occ=0.2)
        ox, oy, _ = plan.origin
        poses = np.column_stack([rng.uniform(ox - 1, ox + 4, 100), rng.uniform(oy - 1, oy + 4, 100),
                                 rng.uniform(-math.pi, math.pi, 100)])
        scan = _random_scan(rng, 16)
        # range only
        cfg = SensorModelConfig(eps_rng=1.0, eps_lbl=0.0, sigma_occ=0.2)
        got = mcl.sensor_update_range(state_of(poses), scan, fields, cfg).particles.log_weights
        ref = likelihood_field_reference(poses, scan.bearings, scan.ranges, fields.occ.values, 0.05, plan.origin,
                                         0.2, cfg.p_floor)
        top = ref.max()
        ref = ref - (top + math.log(np.exp(ref - top).sum()))
        worst = max(worst, float(np.max(np.abs(got - ref))))
        # label only: the occupancy field must not matter
        cfg = SensorModelConfig(eps_rng=0.0, eps_lbl=1.0)
        a = mcl.sensor_update_range(state_of(poses), scan, fields, cfg).particles.log_weights
        junk = replace(fields.occ, values=rng.uniform(0, 10, fields.occ.values.shape))
        b = mcl.sensor_update_range(state_of(poses), scan, replace(fields, occ=junk), cfg).particles.log_weights
        changed += not np.array_equal(a, b)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and changed == 0 and dt < 10
    assert report(5, ok, f"range-only max |dlogw|={worst:.1e}; label-only changed under perturbation in "
                         f"{changed}/100 trials ({dt:.1f} s)")


def test_6_ray_scale_invariance():
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(100 + trial)
        plan = random_plan(rng, (40, 50), rng.uniform(0.03, 0.2), resolution=0.05)
        poses = np.column_stack([rng.uniform(0, 2.5, 100), rng.uniform(0, 2.0, 100), rng.uniform(-3, 3, 100)])
        scan = SemanticScan(tuple(SemanticReading(r.bearing, None, r.label) for r in _random_scan(rng, 32).readings))
        cfg = SensorModelConfig(max_range=10.0)
        base = mcl.sensor_update_ray(state_of(poses), scan, plan, build_fields(plan, 0.2, 0.1), cfg)
        for c in (0.5, 2.0, 3.0):
            big = plan.scaled(c)
            out = mcl.sensor_update_ray(state_of(poses * [c, c, 1.0]), scan, big, build_fields(big, 0.2 * c, 0.1 * c),
                                        replace(cfg, max_range=10.0 * c))
            worst = max(worst, float(np.max(np.abs(out.particles.log_weights - base.particles.log_weights))))
    dt = time.perf_counter() - t0
    assert report(6, worst <= 1e-9 and dt < 10, f"max |dlogw| over c in (0.5, 2, 3): {worst:.1e} ({dt:.1f} s)")


def _fixed_filter(**kw):
    sensor = SensorModelConfig(**{k: kw.pop(k) for k in list(kw) if k in ("sigma_occ", "ghost_factor")})
    return FilterConfig(sensor=sensor, **kw)


COMBINED_FILTER = _fixed_filter(sigma_occ=1.5, sigma_base=0.5, min_particles=5000, max_particles=5000)
RAY_FILTER = _fixed_filter(sigma_base=0.3, min_particles=5000, max_particles=5000)


def _convergence(mode, filt):
    cfg = ExperimentConfig(world=WORLD, simulation=SIM, filter=replace(filt, mode=mode), mode=mode, init="global",
                           seeds=SEEDS, max_steps=150, stop_on_convergence=True)
    return [run_seed(cfg, s).convergence_step for s in SEEDS]


def test_7_desk_scale_convergence():
    t0 = time.perf_counter()
    comb = _convergence("combined", COMBINED_FILTER)
    ray = _convergence("ray", RAY_FILTER)
    dt = time.perf_counter() - t0
    nc = [s for s in comb if s is not None]
    nr = [s for s in ray if s is not None]
    mc = float(np.median(nc)) if nc else math.inf
    mr = float(np.median(nr)) if nr else math.inf
    ok = len(nc) >= 16 and len(nr) >= 12 and mc < mr and dt < 600
    assert report(7, ok, f"combined {len(nc)}/20 converged (median step {mc}), ray {len(nr)}/20 "
                         f"(median step {mr}) ({dt:.0f} s)")


def test_8_ghost_factor_ordering():
    t0 = time.perf_counter()
    med = {}
    for g in (0.0, 3.0):
        filt = _fixed_filter(ghost_factor=g, sigma_base=0.3, min_particles=1000, max_particles=1000, mode="ray")
        cfg = ExperimentConfig(world=WORLD, simulation=SIM, filter=filt, mode="ray", init="room",
                               init_sigma_xy=1.0, init_sigma_theta=0.5, seeds=SEEDS)
        med[g] = float(np.median([run_seed(cfg, s).report.rmse for s in SEEDS]))
    dt = time.perf_counter() - t0
    ok = med[3.0] < med[0.0] and dt < 300
    assert report(8, ok, f"median ATE rmse: ghost 3.0 -> {med[3.0]:.3f} m, ghost 0.0 -> {med[0.0]:.3f} m ({dt:.0f} s)")


def test_9_timing_reported():
    rows = run_bench(particles=(250, 50000), rays=64, repeat=5)
    best = {}
    for r in rows:
        if r.get("particles") and r["task"].startswith("ray update"):
            best[r["particles"]] = min(best.get(r["particles"], math.inf), r["ms"])
    ok = best[250] <= 10.0 and best[50000] <= 2250.0
    report(9, ok, f"ray update 250x64: {best[250]:.1f} ms (target 10), 50000x64: {best[50000]:.0f} ms "
                  f"(target 2250), fastest backend", gated=False)


def test_10_determinism(tmp_path):
    t0 = time.perf_counter()
    small = SyntheticWorldSpec(width=120, height=100, rooms=3, min_room=30, steps=60)
    base = ExperimentConfig(world=small, simulation=SIM, filter=FilterConfig(min_particles=300, max_particles=2000),
                            init="global", seeds=(0, 1, 2), render=True, frame_stride=20)
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        run_experiment(replace(base, output=d))
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    other = sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
    differ = [str(f) for f in files if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes()]
    dt = time.perf_counter() - t0
    ok = files == other and not differ and dt < 120
    assert report(10, ok, f"{len(files)} artifacts compared, {len(differ)} differ ({dt:.1f} s)")

