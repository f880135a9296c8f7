import numpy as np
import pytest

from semloc.floorplan import Label, world_to_cells
from semloc.world import SyntheticWorldSpec, WorldError, generate_world


@pytest.mark.parametrize("seed", range(6))
def test_world_properties(seed):
    spec = SyntheticWorldSpec()
    w = generate_world(spec, seed)
    plan = w.plan
    assert (plan.width, plan.height) == (200, 200) and plan.resolution == 0.05
    assert len(w.rooms) >= 8
    codes = plan.label_codes
    assert (codes == int(Label.DOOR)).any() and (codes == int(Label.WALL)).any()
    # the outer boundary is closed: no free cell on the border
    border = np.concatenate([plan.occupied[0], plan.occupied[-1], plan.occupied[:, 0], plan.occupied[:, -1]])
    assert border.all()
    xy = np.array([[p.pose.x, p.pose.y] for p in w.trajectory])
    c, r, inside = world_to_cells(plan, xy[:, 0], xy[:, 1])
    assert inside.all()
    on = codes[r, c]
    assert np.all(~plan.occupied[r, c] | (on == int(Label.DOOR)))
    assert (on == int(Label.DOOR)).any()
    t = [p.t for p in w.trajectory]
    assert np.all(np.diff(t) > 0)
    steps = np.hypot(*np.diff(xy, axis=0).T)
    assert steps.max() <= spec.step_length + 1e-9


def test_world_free_space_connected():
    from scipy import ndimage

    w = generate_world(SyntheticWorldSpec(), 3)
    passable = ~w.plan.occupied | (w.plan.label_codes == int(Label.DOOR))
    _, n = ndimage.label(passable)
    assert n == 1


def test_world_determinism():
    a, b = generate_world(seed=11), generate_world(seed=11)
    assert np.array_equal(a.plan.label_codes, b.plan.label_codes)
    assert a.trajectory == b.trajectory
    c = generate_world(seed=12)
    assert not np.array_equal(a.plan.label_codes, c.plan.label_codes)


def test_layout_seed_fixes_the_map():
    spec = SyntheticWorldSpec(layout_seed=5)
    a, b = generate_world(spec, 1), generate_world(spec, 2)
    assert np.array_equal(a.plan.occupied, b.plan.occupied)


def test_windows_only_on_exterior():
    w = generate_world(SyntheticWorldSpec(window_density=1.0), 0)
    codes = w.plan.label_codes
    rr, cc = np.nonzero(codes == int(Label.WINDOW))
    assert len(rr) > 0
    t = SyntheticWorldSpec().wall_thickness
    edge = (rr < t) | (rr >= 200 - t) | (cc < t) | (cc >= 200 - t)
    assert edge.all()
    none = generate_world(SyntheticWorldSpec(window_density=0.0), 0)
    assert not (none.plan.label_codes == int(Label.WINDOW)).any()


def test_bad_specs():
    with pytest.raises(WorldError):
        SyntheticWorldSpec(rooms=0)
    with pytest.raises(WorldError):
        SyntheticWorldSpec(window_density=1.5)
    with pytest.raises(WorldError):
        SyntheticWorldSpec(width=4)
