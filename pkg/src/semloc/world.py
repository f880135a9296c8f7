"""Procedural multi-room floorplans with a ground-truth trajectory through doors."""
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .evaluation import TimedPose
from .floorplan import LABELS, Label, SemanticFloorplan
from .geometry import Pose2D


class WorldError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticWorldSpec:
    width: int = 200
    height: int = 200
    rooms: int = 8
    door_width: int = 16  # cells
    window_density: float = 0.5  # chance that an exterior room side gets a window
    layout_seed: Optional[int] = None  # overrides the call seed for the layout only
    resolution: float = 0.05
    wall_thickness: int = 2
    min_room: int = 40  # smallest interior side, cells
    clearance: int = 8  # cells the trajectory keeps from walls
    steps: int = 200
    step_length: float = 0.1  # metres between trajectory poses
    dt: float = 0.2  # seconds between trajectory poses

    def __post_init__(self):
        if self.rooms < 1:
            raise WorldError("rooms must be >= 1")
        if self.door_width < 1:
            raise WorldError("door_width must be >= 1")
        if self.width < 3 * self.wall_thickness or self.height < 3 * self.wall_thickness:
            raise WorldError("grid too small")
        if not 0.0 <= self.window_density <= 1.0:
            raise WorldError("window_density must lie in [0, 1]")
        if self.steps < 2 or self.step_length <= 0 or self.dt <= 0:
            raise WorldError("trajectory needs steps >= 2 and positive step_length and dt")


class Rect(NamedTuple):
    x0: int
    y0: int
    x1: int
    y1: int  # interior cells [x0, x1) x [y0, y1)


class Door(NamedTuple):
    vertical: bool  # True: door in a wall running along y
    wall_lo: int  # wall cells across the wall [wall_lo, wall_hi)
    wall_hi: int
    span_lo: int  # door cells along the wall [span_lo, span_hi)
    span_hi: int


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    plan: SemanticFloorplan
    trajectory: list
    rooms: list
    doors: list
    room_of_door: list  # (room_a, room_b) per door; -1 for outside


def _door_margin(spec):
    return spec.clearance + 2


def _blocks_door(doors, vertical_wall, lo, hi, near_lo, near_hi, pad=2):
    """Would a new wall across [lo, hi) touch a door lying in a perpendicular wall?

    ``near_lo``/``near_hi`` are the wall coordinates bounding the room being
    split, where such a door could sit.
    """
    for d in doors:
        if d.vertical == vertical_wall:
            continue
        if not (d.wall_hi == near_lo or d.wall_lo == near_hi):
            continue
        if d.span_lo < hi + pad and lo - pad < d.span_hi:
            return True
    return False


def _try_split(rect, spec, doors, rng, vertical):
    wt, dw, m = spec.wall_thickness, spec.door_width, _door_margin(spec)
    a0, a1 = (rect.x0, rect.x1) if vertical else (rect.y0, rect.y1)
    b0, b1 = (rect.y0, rect.y1) if vertical else (rect.x0, rect.x1)
    lo, hi = a0 + spec.min_room, a1 - wt - spec.min_room
    if hi < lo or b1 - b0 < 2 * m + dw:
        return None
    for _ in range(40):
        s = int(rng.integers(lo, hi + 1))
        if _blocks_door(doors, vertical, s, s + wt, b0, b1):
            continue
        d = int(rng.integers(b0 + m, b1 - m - dw + 1))
        door = Door(vertical, s, s + wt, d, d + dw)
        if vertical:
            return Rect(rect.x0, rect.y0, s, rect.y1), Rect(s + wt, rect.y0, rect.x1, rect.y1), door
        return Rect(rect.x0, rect.y0, rect.x1, s), Rect(rect.x0, s + wt, rect.x1, rect.y1), door
    return None


def _layout(spec, rng):
    wt = spec.wall_thickness
    rooms = [Rect(wt, wt, spec.width - wt, spec.height - wt)]
    doors, walls = [], []
    while len(rooms) < spec.rooms:
        order = sorted(range(len(rooms)), key=lambda i: -(rooms[i].x1 - rooms[i].x0) * (rooms[i].y1 - rooms[i].y0))
        for i in order:
            r = rooms[i]
            prefer_vertical = (r.x1 - r.x0) >= (r.y1 - r.y0)
            out = _try_split(r, spec, doors, rng, prefer_vertical) or _try_split(r, spec, doors, rng, not prefer_vertical)
            if out is not None:
                a, b, door = out
                rooms[i] = a
                rooms.append(b)
                doors.append(door)
                walls.append(door)
                break
        else:
            raise WorldError(f"cannot fit {spec.rooms} rooms of at least {spec.min_room} cells")
    return rooms, doors


def _exterior_sides(rect, spec):
    """(vertical, wall_lo, wall_hi, span_lo, span_hi) for each side of ``rect`` on the map boundary."""
    wt, w, h = spec.wall_thickness, spec.width, spec.height
    sides = []
    if rect.x0 == wt:
        sides.append((True, 0, wt, rect.y0, rect.y1))
    if rect.x1 == w - wt:
        sides.append((True, w - wt, w, rect.y0, rect.y1))
    if rect.y0 == wt:
        sides.append((False, 0, wt, rect.x0, rect.x1))
    if rect.y1 == h - wt:
        sides.append((False, h - wt, h, rect.x0, rect.x1))
    return sides


def _paint(codes, vertical, wall_lo, wall_hi, span_lo, span_hi, value):
    if vertical:
        codes[span_lo:span_hi, wall_lo:wall_hi] = value
    else:
        codes[wall_lo:wall_hi, span_lo:span_hi] = value


def _build_plan(spec, rooms, doors, rng):
    h, w = spec.height, spec.width
    codes = np.full((h, w), int(Label.WALL), dtype=np.int8)
    for r in rooms:
        codes[r.y0:r.y1, r.x0:r.x1] = 0
    for d in doors:
        _paint(codes, *d, int(Label.DOOR))
    if spec.rooms == 1:
        sides = _exterior_sides(rooms[0], spec)
        vertical, lo, hi, s0, s1 = sides[int(rng.integers(len(sides)))]
        m = _door_margin(spec)
        if s1 - s0 < 2 * m + spec.door_width:
            raise WorldError("room too small for a door")
        d0 = int(rng.integers(s0 + m, s1 - m - spec.door_width + 1))
        door = Door(vertical, lo, hi, d0, d0 + spec.door_width)
        doors = doors + [door]
        _paint(codes, *door, int(Label.DOOR))
    windows = 0
    for r in rooms:
        for vertical, lo, hi, s0, s1 in _exterior_sides(r, spec):
            if rng.random() >= spec.window_density:
                continue
            length = min(24, s1 - s0 - 8)
            if length < 4:
                continue
            a = int(rng.integers(s0 + 4, s1 - 4 - length + 1))
            view = codes[a:a + length, lo:hi] if vertical else codes[lo:hi, a:a + length]
            if np.any(view == int(Label.DOOR)):
                continue
            _paint(codes, vertical, lo, hi, a, a + length, int(Label.WINDOW))
            windows += 1
    occupancy = (codes > 0).astype(np.float64)
    labels = np.stack([(codes == int(lab)).astype(np.float64) for lab in LABELS])
    plan = SemanticFloorplan(occupancy, labels, spec.resolution)
    return plan, doors


def _room_index(spec, rooms):
    idx = np.full((spec.height, spec.width), -1, dtype=np.int32)
    for i, r in enumerate(rooms):
        idx[r.y0:r.y1, r.x0:r.x1] = i
    return idx


def _door_geometry(door, spec):
    """Approach point on each side and the door centre, in metres."""
    res, c = spec.resolution, spec.clearance
    mid = 0.5 * (door.span_lo + door.span_hi) * res
    before = (door.wall_lo - c) * res
    centre = 0.5 * (door.wall_lo + door.wall_hi) * res
    after = (door.wall_hi + c) * res
    if door.vertical:
        return (before, mid), (centre, mid), (after, mid)
    return (mid, before), (mid, centre), (mid, after)


def _trajectory(spec, rooms, doors, adjacency, rng):
    res, c = spec.resolution, spec.clearance

    def random_point(i):
        r = rooms[i]
        return (rng.uniform((r.x0 + c) * res, (r.x1 - c) * res),
                rng.uniform((r.y0 + c) * res, (r.y1 - c) * res))

    need = spec.steps * spec.step_length + 1.0
    room = int(rng.integers(len(rooms)))
    pts = [random_point(room)]
    length, prev_door = 0.0, None
    inner = [d for d, (a, b) in enumerate(adjacency) if a >= 0 and b >= 0]
    while length < need:
        options = [d for d in inner if room in adjacency[d]]
        if options:
            if len(options) > 1 and prev_door in options:
                options.remove(prev_door)
            d = options[int(rng.integers(len(options)))]
            a, b = adjacency[d]
            p_a, centre, p_b = _door_geometry(doors[d], spec)
            if room == a:
                pts += [p_a, centre, p_b]
                room = b
            else:
                pts += [p_b, centre, p_a]
                room = a
            prev_door = d
        pts.append(random_point(room))
        length = sum(math.dist(p, q) for p, q in zip(pts, pts[1:]))

    # resample the polyline at constant arc length
    poses = []
    seg_start = 0.0
    k = 0
    for p, q in zip(pts, pts[1:]):
        seg = math.dist(p, q)
        if seg == 0.0:
            continue
        heading = math.atan2(q[1] - p[1], q[0] - p[0])
        while k < spec.steps and k * spec.step_length <= seg_start + seg:
            u = (k * spec.step_length - seg_start) / seg
            poses.append(TimedPose(k * spec.dt, Pose2D(p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1]), heading)))
            k += 1
        seg_start += seg
    return poses


def generate_world(spec=SyntheticWorldSpec(), seed=0):
    """Connected multi-room plan (walls, doors between rooms, windows outside) plus a trajectory.

    The trajectory only ever stands in free cells or door cells and, with two or
    more rooms, passes through at least one door. Fully determined by the seed.
    """
    rng = np.random.default_rng(spec.layout_seed if spec.layout_seed is not None else seed)
    rooms, doors = _layout(spec, rng)
    plan, doors = _build_plan(spec, rooms, doors, rng)
    ridx = _room_index(spec, rooms)
    adjacency = []
    for d in doors:
        (ax, ay), _, (bx, by) = _door_geometry(d, spec)
        ra = ridx[int(ay / spec.resolution), int(ax / spec.resolution)] if 0 <= ax and 0 <= ay else -1
        inb = bx < spec.width * spec.resolution and by < spec.height * spec.resolution
        rb = ridx[int(by / spec.resolution), int(bx / spec.resolution)] if inb else -1
        adjacency.append((int(ra), int(rb)))
    traj = _trajectory(spec, rooms, doors, adjacency, np.random.default_rng([seed, 1]))
    return SyntheticWorld(plan, traj, rooms, doors, adjacency)
