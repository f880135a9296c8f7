import json
from dataclasses import replace

import numpy as np
import pytest

from semloc import mcl
from semloc.config import ConfigError
from semloc.evaluation import AteReport
from semloc.experiment import (ExperimentConfig, SimulationSettings, convergence_step, experiment_config_from_kv,
                               load_dataset, load_experiment_config, read_errors_csv, render_frame, run_experiment,
                               run_seed)
from semloc.floorplan import Label
from semloc.mcl import FilterConfig, Mode
from semloc.sensor import SemanticScan
from semloc.world import SyntheticWorldSpec

SMALL_WORLD = SyntheticWorldSpec(width=100, height=80, rooms=2, min_room=30, steps=30)


def small_config(tmp_path, **kw):
    f = FilterConfig(min_particles=200, max_particles=200)
    base = ExperimentConfig(world=SMALL_WORLD, filter=f, init="room", init_sigma_xy=0.2, init_sigma_theta=0.2,
                            seeds=(0, 1), output=tmp_path / "out", simulation=SimulationSettings(rays=16))
    return replace(base, **kw)


def test_convergence_step():
    assert convergence_step([1.0] * 5 + [0.1] * 20) == 5
    assert convergence_step([0.1] * 19 + [1.0]) is None
    assert convergence_step([0.1, 0.3] * 30, window=1) == 0


def test_run_experiment_artifacts_and_summary(tmp_path):
    cfg = small_config(tmp_path)
    assert run_experiment(cfg) == 0
    out = cfg.output
    summary = json.loads((out / "summary.json").read_text())
    errs = []
    for s in cfg.seeds:
        e = read_errors_csv(out / f"errors_{s}.csv")
        errs += e
        seed_sum = summary["seeds"][str(s)]
        assert seed_sum["summary"] == AteReport.from_errors(e).summary()
        assert seed_sum["convergence_step"] == convergence_step(e)
        assert (out / f"estimate_{s}.csv").exists()
    assert summary["overall"] == AteReport.from_errors(errs).summary()
    assert summary["mode"] == "combined"


def test_byte_identical_reruns(tmp_path):
    a = small_config(tmp_path, output=tmp_path / "a")
    b = small_config(tmp_path, output=tmp_path / "b")
    run_experiment(a)
    run_experiment(b)
    names = sorted(p.name for p in a.output.iterdir())
    assert names == sorted(p.name for p in b.output.iterdir())
    for n in names:
        assert (a.output / n).read_bytes() == (b.output / n).read_bytes(), n


def test_frames_rendered(tmp_path):
    cfg = small_config(tmp_path, render=True, frame_stride=10, seeds=(0,), max_steps=21)
    run_experiment(cfg)
    frames = sorted((cfg.output / "frames" / "seed_0").glob("frame_*.png"))
    assert [f.name for f in frames] == ["frame_0.png", "frame_10.png", "frame_20.png"]


def test_render_frame_bounds_and_determinism():
    from semloc.world import generate_world

    w = generate_world(SMALL_WORLD, 0)
    st = mcl.init_global(w.plan, None, 300, seed=0)
    far = mcl.ParticleSet.uniform(np.vstack([st.particles.poses, [[1e3, -1e3, 0.0]]]))
    truth = w.trajectory[0].pose
    a = render_frame(w.plan, far, truth, truth, scale=3)
    b = render_frame(w.plan, far, truth, truth, scale=3)
    assert a.shape == (w.plan.height * 3, w.plan.width * 3, 3) and a.dtype == np.uint8
    assert np.array_equal(a, b)
    assert (a == (0, 200, 0)).all(axis=2).any() or (a == (220, 0, 0)).all(axis=2).any()
    plain = render_frame(w.plan)
    assert plain.shape == (w.plan.height * 2, w.plan.width * 2, 3)
    # row 0 of the grid (y = 0) is drawn at the bottom of the image
    r, c = np.argwhere(w.plan.label_codes == int(Label.DOOR))[0]
    assert tuple(plain[2 * (w.plan.height - 1 - r), 2 * c]) == (0, 170, 60)


def test_ray_mode_never_reads_ranges(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, mode=Mode.RAY, seeds=(0,), max_steps=10)
    ds = load_dataset(cfg, 0)
    reads = {"n": 0}
    orig = SemanticScan.ranges

    def counting(self):
        reads["n"] += 1
        return orig.fget(self)

    monkeypatch.setattr(SemanticScan, "ranges", property(counting))
    run_seed(cfg, 0, ds=ds)
    assert reads["n"] == 0
    run_seed(replace(cfg, mode=Mode.COMBINED, filter=replace(cfg.filter, mode=Mode.COMBINED)), 0, ds=ds)
    assert reads["n"] > 0


def test_config_file_parsing(tmp_path):
    (tmp_path / "f.cfg").write_text("sigma_occ: 0.7\nghost_factor: 7.0\n")
    (tmp_path / "exp.cfg").write_text(
        "mode: RAY\nseeds: 1, 2 3\nfilter_config: f.cfg\nfilter_sigma_base: 0.3\nworld_rooms: 3\n"
        "sim_fov: 2.0\ninit: room\noutput: res\n"
    )
    cfg = load_experiment_config(tmp_path / "exp.cfg")
    assert cfg.mode is Mode.RAY and cfg.filter.mode is Mode.RAY
    assert cfg.seeds == (1, 2, 3)
    assert cfg.filter.sensor.sigma_occ == 0.7 and cfg.filter.sensor.ghost_factor == 7.0
    assert cfg.filter.sigma_base == 0.3
    assert cfg.world.rooms == 3 and cfg.simulation.fov == 2.0
    assert cfg.output == tmp_path / "res"
    with pytest.raises(ConfigError):
        experiment_config_from_kv({"bogus": "1"})
    with pytest.raises(ConfigError):
        experiment_config_from_kv({"init": "nowhere"})
    with pytest.raises(ConfigError):
        experiment_config_from_kv({"world_rooms": "0"})


def test_recorded_dataset_round_trip(tmp_path):
    from semloc.experiment import write_dataset

    cfg = small_config(tmp_path, seeds=(0,), max_steps=15)
    ds = load_dataset(cfg, 0)
    meta = write_dataset(ds, tmp_path / "data")
    d = tmp_path / "data"
    rec = replace(cfg, meta=meta, trajectory=d / "groundtruth.csv", odometry=d / "odometry.csv",
                  scans=d / "scans.txt", output=tmp_path / "rec")
    a = run_seed(cfg, 0, ds=ds)
    b = run_seed(rec, 0)
    assert a.report.per_step_error == pytest.approx(b.report.per_step_error, abs=1e-9)


def test_bad_seed_recorded(tmp_path):
    cfg = small_config(tmp_path, seeds=(0,), meta=tmp_path / "missing.yaml", trajectory=tmp_path / "x.csv")
    with pytest.raises(ConfigError):
        run_experiment(cfg)
