"""Timing of the hot paths for both kernel backends.

Reports the distance transform, batched raycasting and one sensor update
of each flavour at a few particle counts. Numbers are wall-clock medians.
"""
import statistics
import time

import numpy as np

from . import _kernels, mcl
from .fields import build_fields
from .mcl import FilterState, ParticleSet, SensorModelConfig
from .sensor import DEFAULT_FOV, SensorNoise, bearings_for_camera, simulate_scan
from .world import SyntheticWorldSpec, generate_world

TARGETS_MS = {250: 10.0, 50000: 2250.0}  # soft targets for one sensor update


def _median_ms(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(out)


def _random_poses(plan, n, rng):
    free = np.argwhere(~plan.occupied)
    pick = free[rng.integers(0, len(free), n)]
    ox, oy, _ = plan.origin
    xy = (pick[:, ::-1] + rng.random((n, 2))) * plan.resolution + (ox, oy)
    return np.column_stack([xy, rng.uniform(-np.pi, np.pi, n)])


def run_bench(particles=(250, 5000, 50000), rays=64, repeat=5, seed=0, backends=None):
    """Time every hot path; returns a list of row dicts."""
    world = generate_world(SyntheticWorldSpec(), seed)
    plan = world.plan
    fields = build_fields(plan)
    bearings = bearings_for_camera(DEFAULT_FOV, rays)
    scan = simulate_scan(plan, world.trajectory[0].pose, bearings, SensorNoise(), rng_seed=seed)
    cfg = SensorModelConfig()
    rng = np.random.default_rng(seed)
    names = backends or sorted(_kernels.backends())
    rows = []
    for name in names:
        with _kernels.use_backend(name):
            rows.append({"backend": name, "task": f"distance transform {plan.width}x{plan.height}",
                         "ms": _median_ms(lambda: _kernels.edt_sq(plan.occupied), repeat)})
            for n in particles:
                st = FilterState(ParticleSet.uniform(_random_poses(plan, n, rng)), 1, n)
                r = repeat if n <= 5000 or name == "cython" else 1
                rows.append({"backend": name, "task": f"ray update {n}x{rays}",
                             "ms": _median_ms(lambda: mcl.sensor_update_ray(st, scan, plan, fields, cfg), r),
                             "particles": n})
    # the endpoint model does not touch the compiled kernels
    for n in particles:
        st = FilterState(ParticleSet.uniform(_random_poses(plan, n, rng)), 1, n)
        rows.append({"backend": "numpy", "task": f"range update {n}x{rays}",
                     "ms": _median_ms(lambda: mcl.sensor_update_range(st, scan, fields, cfg), repeat),
                     "particles": n})
    for row in rows:
        target = TARGETS_MS.get(row.get("particles"))
        row["target_ms"] = target
        row["within_target"] = None if target is None else row["ms"] <= target
    return rows


def format_bench(rows):
    lines = [f"{'backend':<8} {'task':<32} {'ms':>10} {'target':>8}"]
    for r in rows:
        tgt = "" if r["target_ms"] is None else ("ok" if r["within_target"] else "over") + f" {r['target_ms']:g}"
        lines.append(f"{r['backend']:<8} {r['task']:<32} {r['ms']:>10.2f} {tgt:>8}")
    return "\n".join(lines)
