"""Semantic floorplans: occupancy grid plus per-cell wall/door/window likelihoods.

Grid convention: ``occupancy[row, col]``; columns run along the map frame x
axis and rows along y. Raster row 0 is the *top* of the image, so rasters are
flipped vertically on load (the usual occupancy-map image convention).
"""
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from PIL import Image

from .config import ConfigError, fmt_float, read_kv, write_kv


class FloorplanError(ValueError):
    pass


class Label(enum.IntEnum):
    WALL = 1
    DOOR = 2
    WINDOW = 3

    @classmethod
    def from_code(cls, code):
        """Raster/log code to label; 0 means unlabeled and maps to None."""
        code = int(code)
        if code == 0:
            return None
        try:
            return cls(code)
        except ValueError:
            raise FloorplanError(f"unknown label code {code}") from None


LABELS = (Label.WALL, Label.DOOR, Label.WINDOW)

DEFAULT_OCCUPIED_THRESH = 0.65


class GridIndex(NamedTuple):
    col: int
    row: int


@dataclass(frozen=True)
class Cell:
    occupancy: float
    label_likelihood: dict


@dataclass(frozen=True, eq=False)
class SemanticFloorplan:
    occupancy: np.ndarray
    labels: np.ndarray  # (3, height, width) in LABELS order
    resolution: float
    origin: tuple = (0.0, 0.0, 0.0)
    occupied_thresh: float = DEFAULT_OCCUPIED_THRESH
    occupied: np.ndarray = field(init=False, repr=False)
    label_codes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.float64)
        lab = np.array(self.labels, dtype=np.float64)
        if occ.ndim != 2 or occ.shape[0] == 0 or occ.shape[1] == 0:
            raise FloorplanError("occupancy must be a non-empty 2-D grid")
        if lab.shape != (len(LABELS),) + occ.shape:
            raise FloorplanError(f"labels must have shape {(len(LABELS),) + occ.shape}, got {lab.shape}")
        if not self.resolution > 0:
            raise FloorplanError("resolution must be > 0")
        if not 0.0 < self.occupied_thresh < 1.0:
            raise FloorplanError("occupied_thresh must lie in (0, 1)")
        if occ.min() < 0 or occ.max() > 1 or lab.min() < 0 or lab.max() > 1:
            raise FloorplanError("likelihoods must lie in [0, 1]")
        if np.any((lab > 0).any(axis=0) & (occ <= 0)):
            raise FloorplanError("labelled cells must have non-zero occupancy")
        occ.setflags(write=False)
        lab.setflags(write=False)
        occupied = occ >= self.occupied_thresh
        occupied.setflags(write=False)
        codes = np.where(
            (lab >= self.occupied_thresh).any(axis=0), lab.argmax(axis=0) + 1, 0
        ).astype(np.int8)
        codes.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "occupancy", occ)
        set_(self, "labels", lab)
        set_(self, "resolution", float(self.resolution))
        set_(self, "origin", tuple(float(v) for v in self.origin))
        set_(self, "occupied_thresh", float(self.occupied_thresh))
        set_(self, "occupied", occupied)
        set_(self, "label_codes", codes)

    @property
    def width(self):
        return self.occupancy.shape[1]

    @property
    def height(self):
        return self.occupancy.shape[0]

    def label_grid(self, label):
        return self.labels[LABELS.index(Label(label))]

    def cell(self, idx):
        col, row = idx
        return Cell(
            occupancy=float(self.occupancy[row, col]),
            label_likelihood={lab: float(self.labels[i, row, col]) for i, lab in enumerate(LABELS)},
        )

    def in_bounds(self, idx):
        col, row = idx
        return 0 <= col < self.width and 0 <= row < self.height

    def scaled(self, factor):
        """Same grid with every length (resolution, origin position) multiplied by ``factor``."""
        ox, oy, oth = self.origin
        return SemanticFloorplan(
            self.occupancy, self.labels, self.resolution * factor,
            (ox * factor, oy * factor, oth), self.occupied_thresh,
        )

    def __eq__(self, other):
        if not isinstance(other, SemanticFloorplan):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and self.occupied_thresh == other.occupied_thresh
            and np.array_equal(self.occupancy, other.occupancy)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def load_floorplan(occupancy_raster, label_raster, resolution, origin=(0.0, 0.0, 0.0),
                   occupied_thresh=DEFAULT_OCCUPIED_THRESH):
    """Build a plan from an 8-bit greyscale raster and an indexed label raster.

    Dark pixels are occupied: ``occupancy = 1 - grey / 255``. Label codes are
    0 (none), 1 (wall), 2 (door), 3 (window). Arrays are in image orientation
    (row 0 at the top).
    """
    grey = np.asarray(occupancy_raster)
    codes = np.asarray(label_raster)
    if grey.shape != codes.shape:
        raise FloorplanError(f"raster dimensions differ: {grey.shape} vs {codes.shape}")
    if grey.ndim != 2:
        raise FloorplanError("rasters must be single-channel 2-D images")
    bad = np.setdiff1d(np.unique(codes), [0, 1, 2, 3])
    if bad.size:
        raise FloorplanError(f"unknown label code {int(bad[0])}")
    grey = grey[::-1].astype(np.float64)
    codes = codes[::-1]
    occupancy = 1.0 - grey / 255.0
    labels = np.stack([(codes == int(lab)).astype(np.float64) for lab in LABELS])
    return SemanticFloorplan(occupancy, labels, resolution, origin, occupied_thresh)


def _read_raster(path):
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "P"):
                return np.array(img)
            if img.mode in ("1", "LA", "RGB", "RGBA"):
                return np.array(img.convert("L"))
            raise FloorplanError(f"{path}: unsupported image mode {img.mode}")
    except OSError as exc:
        raise FloorplanError(f"cannot read raster {path}: {exc}") from exc


def read_meta(path):
    try:
        kv = read_kv(path)
        meta = {
            "resolution": float(kv["resolution"]),
            "origin": (
                float(kv.get("origin_x", 0.0)),
                float(kv.get("origin_y", 0.0)),
                float(kv.get("origin_theta", 0.0)),
            ),
            "occupied_thresh": float(kv.get("occupied_thresh", DEFAULT_OCCUPIED_THRESH)),
        }
    except KeyError as exc:
        raise FloorplanError(f"{path}: missing field {exc}") from None
    except (ValueError, ConfigError) as exc:
        raise FloorplanError(f"{path}: {exc}") from None
    base = Path(path).parent
    for key in ("occupancy", "labels"):
        if key in kv:
            meta[key] = base / kv[key]
    return meta


def read_floorplan(meta_path, occupancy_path=None, labels_path=None):
    """Load a plan from disk; raster paths default to those named in the metadata."""
    meta = read_meta(meta_path)
    occupancy_path = occupancy_path or meta.get("occupancy")
    labels_path = labels_path or meta.get("labels")
    if occupancy_path is None or labels_path is None:
        raise FloorplanError("occupancy and label raster paths are required")
    return load_floorplan(
        _read_raster(occupancy_path), _read_raster(labels_path),
        meta["resolution"], meta["origin"], meta["occupied_thresh"],
    )


LABEL_PALETTE = [0, 0, 0, 90, 90, 90, 0, 170, 60, 30, 110, 230]


def write_floorplan(plan, directory, stem="map"):
    """Write ``<stem>_occupancy.png``, ``<stem>_labels.png`` and ``<stem>.yaml``.

    Only binary label likelihoods round-trip; fractional ones are thresholded.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grey = np.rint(255.0 * (1.0 - plan.occupancy)).astype(np.uint8)[::-1]
    occ_name, lab_name = f"{stem}_occupancy.png", f"{stem}_labels.png"
    Image.fromarray(grey, mode="L").save(directory / occ_name)
    img = Image.fromarray(plan.label_codes.astype(np.uint8)[::-1], mode="P")
    img.putpalette(LABEL_PALETTE + [0] * (768 - len(LABEL_PALETTE)))
    img.save(directory / lab_name)
    meta_path = directory / f"{stem}.yaml"
    write_kv(meta_path, {
        "occupancy": occ_name,
        "labels": lab_name,
        "resolution": fmt_float(plan.resolution),
        "origin_x": fmt_float(plan.origin[0]),
        "origin_y": fmt_float(plan.origin[1]),
        "origin_theta": fmt_float(plan.origin[2]),
        "occupied_thresh": fmt_float(plan.occupied_thresh),
    })
    return meta_path


def world_to_local(plan, x, y):
    """World coordinates to the grid frame (metres, unrotated, relative to cell (0,0) corner)."""
    ox, oy, oth = plan.origin
    dx = np.asarray(x, dtype=np.float64) - ox
    dy = np.asarray(y, dtype=np.float64) - oy
    if oth == 0.0:
        return dx, dy
    c, s = math.cos(oth), math.sin(oth)
    return c * dx + s * dy, -s * dx + c * dy


def world_to_cells(plan, x, y):
    """Vectorised world-to-grid lookup: ``(col, row, inside)`` integer arrays."""
    lx, ly = world_to_local(plan, x, y)
    col = np.floor(lx / plan.resolution)
    row = np.floor(ly / plan.resolution)
    inside = (col >= 0) & (col < plan.width) & (row >= 0) & (row < plan.height)
    col = np.where(inside, col, 0).astype(np.intp)
    row = np.where(inside, row, 0).astype(np.intp)
    return col, row, inside


def world_to_grid(plan, p) -> Optional[GridIndex]:
    """Cell containing world point ``p``, or None when it falls outside the map."""
    col, row, inside = world_to_cells(plan, p[0], p[1])
    if not bool(inside):
        return None
    return GridIndex(int(col), int(row))


def grid_to_world(plan, idx):
    col, row = idx
    if not plan.in_bounds((col, row)):
        raise FloorplanError(f"grid index {tuple(idx)} outside {plan.width}x{plan.height} map")
    lx = (col + 0.5) * plan.resolution
    ly = (row + 0.5) * plan.resolution
    ox, oy, oth = plan.origin
    c, s = math.cos(oth), math.sin(oth)
    return (ox + c * lx - s * ly, oy + s * lx + c * ly)


def label_prior(plan, label):
    """Fraction of occupied cells whose dominant label is ``label``.

    Each occupied cell counts towards at most one label, so the priors of all
    labels sum to at most one.
    """
    n_occ = int(plan.occupied.sum())
    if n_occ == 0:
        raise FloorplanError("plan has no occupied cells")
    n_lab = int(((plan.label_codes == int(label)) & plan.occupied).sum())
    return n_lab / n_occ
