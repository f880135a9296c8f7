"""Semantic range/bearing scans, grid raycasting and a synthetic scan simulator."""
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .floorplan import Label, GridIndex, world_to_local

DEFAULT_MAX_RANGE = 10.0
DEFAULT_RAYS = 64
DEFAULT_FOV = 1.0

#: confusion-matrix row/column order; index 3 is "no label"
NOISE_LABELS = (Label.WALL, Label.DOOR, Label.WINDOW, None)


class SensorError(ValueError):
    pass


class PoseOutOfBounds(SensorError):
    pass


class DegenerateScanError(SensorError):
    pass


@dataclass(frozen=True)
class SemanticReading:
    bearing: float
    range: Optional[float] = None
    label: Optional[Label] = None

    def __post_init__(self):
        if not -math.pi <= self.bearing < math.pi:
            raise SensorError(f"bearing {self.bearing} outside [-pi, pi)")
        if self.range is not None and not self.range > 0:
            raise SensorError(f"range must be > 0, got {self.range}")
        if self.label is not None and not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label.from_code(self.label))


@dataclass(frozen=True)
class SemanticScan:
    readings: tuple
    timestamp: float = 0.0

    def __post_init__(self):
        readings = tuple(self.readings)
        if not readings:
            raise DegenerateScanError("a scan needs at least one reading")
        b = [r.bearing for r in readings]
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise SensorError("scan bearings must be strictly increasing")
        object.__setattr__(self, "readings", readings)

    def __len__(self):
        return len(self.readings)

    @property
    def has_ranges(self):
        return all(r.range is not None for r in self.readings)

    @property
    def bearings(self):
        return np.array([r.bearing for r in self.readings], dtype=np.float64)

    @property
    def ranges(self):
        """Ranges in metres; NaN where a reading has none."""
        return np.array([math.nan if r.range is None else r.range for r in self.readings])

    @property
    def label_codes(self):
        return np.array([0 if r.label is None else int(r.label) for r in self.readings], dtype=np.int64)


@dataclass(frozen=True)
class RaycastHit:
    range: float
    cell: GridIndex
    label: Optional[Label]


def _identity_confusion():
    return np.eye(4)


@dataclass(frozen=True)
class SensorNoise:
    range_sigma: float = 0.0
    label_confusion: np.ndarray = field(default_factory=_identity_confusion)
    dropout: float = 0.0

    def __post_init__(self):
        m = np.array(self.label_confusion, dtype=np.float64)
        if m.shape != (4, 4) or m.min() < 0 or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise SensorError("label_confusion must be a 4x4 row-stochastic matrix")
        # dropout == 1 is accepted so the simulator can report the degenerate scan
        if not 0.0 <= self.dropout <= 1.0:
            raise SensorError("dropout must lie in [0, 1]")
        if self.range_sigma < 0:
            raise SensorError("range_sigma must be >= 0")
        object.__setattr__(self, "label_confusion", m)

    @classmethod
    def with_label_error(cls, p_error, range_sigma=0.0, dropout=0.0):
        """Each label is replaced by one of the other three classes with total probability ``p_error``."""
        m = np.full((4, 4), p_error / 3.0)
        np.fill_diagonal(m, 1.0 - p_error)
        return cls(range_sigma, m, dropout)


def bearings_for_camera(horizontal_fov, k, model="pinhole"):
    """Bearings of ``k`` scanline columns, right to left (strictly increasing).

    ``pinhole`` spaces rays by the tangent of the column offset as a camera
    does; ``equiangular`` spaces them uniformly, for LiDAR-like sensors.
    """
    if k < 2:
        raise SensorError("need at least two rays")
    idx = np.arange(k, dtype=np.float64)
    u = (2.0 * idx - (k - 1)) / (k - 1)
    if model == "pinhole":
        if not 0.0 < horizontal_fov < math.pi:
            raise SensorError("pinhole field of view must lie in (0, pi)")
        return np.arctan(math.tan(horizontal_fov / 2.0) * u)
    if model == "equiangular":
        if not 0.0 < horizontal_fov <= 2.0 * math.pi:
            raise SensorError("field of view must lie in (0, 2 pi]")
        if horizontal_fov >= 2.0 * math.pi - 1e-12:
            return -math.pi + 2.0 * math.pi * idx / k
        return (horizontal_fov / 2.0) * u
    raise SensorError(f"unknown bearing model {model!r}")


def raycast_batch(plan, poses, bearings, max_range):
    """Cast every bearing from every pose.

    Returns ``(col, row, range)`` arrays of shape (N, K); misses (nothing
    within ``max_range``, ray leaves the map, or pose off the map) have
    ``col = row = -1`` and ``range = nan``. The cell containing the pose is
    never reported as a hit.
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    bearings = np.asarray(bearings, dtype=np.float64)
    n, k = poses.shape[0], bearings.shape[0]
    lx, ly = world_to_local(plan, poses[:, 0], poses[:, 1])
    res = plan.resolution
    px = np.repeat(lx / res, k)
    py = np.repeat(ly / res, k)
    ang = (poses[:, 2:3] + bearings[None, :] - plan.origin[2]).ravel()
    col, row, t = _kernels.raycast_many(plan.occupied, px, py, np.cos(ang), np.sin(ang), max_range / res)
    rng = np.where(t >= 0, t * res, np.nan)
    return col.reshape(n, k), row.reshape(n, k), rng.reshape(n, k)


def raycast(plan, pose, bearing, max_range=DEFAULT_MAX_RANGE):
    """First occupied cell along ``pose.theta + bearing``; None on a miss."""
    col, row, rng = raycast_batch(plan, [[pose.x, pose.y, pose.theta]], [bearing], max_range)
    lx, ly = world_to_local(plan, pose.x, pose.y)
    c0, r0 = math.floor(lx / plan.resolution), math.floor(ly / plan.resolution)
    if not plan.in_bounds((c0, r0)):
        raise PoseOutOfBounds(f"pose ({pose.x}, {pose.y}) is outside the map")
    c, r = int(col[0, 0]), int(row[0, 0])
    if c < 0:
        return None
    return RaycastHit(float(rng[0, 0]), GridIndex(c, r), Label.from_code(plan.label_codes[r, c]))


def simulate_scan(plan, true_pose, bearings, noise=None, max_range=DEFAULT_MAX_RANGE,
                  rng_seed=0, timestamp=0.0):
    """Synthetic scan from ``true_pose``: raycast, then range noise, label confusion and dropout.

    Rays that hit nothing produce no reading.
    """
    noise = noise or SensorNoise()
    lx, ly = world_to_local(plan, true_pose.x, true_pose.y)
    if not plan.in_bounds((math.floor(lx / plan.resolution), math.floor(ly / plan.resolution))):
        raise PoseOutOfBounds(f"pose ({true_pose.x}, {true_pose.y}) is outside the map")
    bearings = np.asarray(bearings, dtype=np.float64)
    col, row, rng = raycast_batch(plan, [[true_pose.x, true_pose.y, true_pose.theta]], bearings, max_range)
    col, row, rng = col[0], row[0], rng[0]
    k = bearings.shape[0]

    gen = np.random.default_rng(rng_seed)
    range_noise = gen.normal(0.0, 1.0, k) * noise.range_sigma
    label_u = gen.random(k)
    drop_u = gen.random(k)
    cdf = np.cumsum(noise.label_confusion, axis=1)

    readings = []
    for i in range(k):
        if col[i] < 0 or drop_u[i] < noise.dropout:
            continue
        true_code = int(plan.label_codes[row[i], col[i]])
        src = 3 if true_code == 0 else true_code - 1
        dst = min(int(np.searchsorted(cdf[src], label_u[i], side="right")), 3)
        r = float(rng[i] + range_noise[i])
        r = min(max(r, 1e-3), max_range)
        readings.append(SemanticReading(float(bearings[i]), r, NOISE_LABELS[dst]))
    if not readings:
        raise DegenerateScanError("simulated scan has no readings")
    return SemanticScan(tuple(readings), float(timestamp))


def strip_ranges(scan):
    """Drop every range, keeping bearings and labels."""
    return replace(scan, readings=tuple(replace(r, range=None) for r in scan.readings))
