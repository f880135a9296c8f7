"""Likelihood fields: exact Euclidean distance maps and per-label Gaussian widths."""
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels
from .floorplan import LABELS, Label, label_prior

OCCUPANCY = "occupancy"

DEFAULT_SIGMA_OCC = 0.2
DEFAULT_SIGMA_BASE = 0.1


class NoSourceWarning(UserWarning):
    """A distance map was requested for a predicate no cell satisfies."""


@dataclass(frozen=True, eq=False)
class DistanceMap:
    values: np.ndarray  # metres, +inf where no source exists
    resolution: float
    origin: tuple = (0.0, 0.0, 0.0)
    has_source: bool = True

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    def at(self, idx):
        col, row = idx
        return float(self.values[row, col])


def source_mask(plan, source):
    if source == OCCUPANCY:
        return plan.occupied
    return plan.label_grid(Label(source)) >= plan.occupied_thresh


def build_distance_map(plan, source=OCCUPANCY):
    """Distance in metres from every cell centre to the nearest source-cell centre.

    ``source`` is ``OCCUPANCY`` or a :class:`Label`. Uses the exact two-pass
    lower-envelope transform over squared cell distances, so the result is
    bit-identical to a brute-force search.
    """
    mask = source_mask(plan, source)
    has_source = bool(mask.any())
    if not has_source:
        warnings.warn(f"no source cells for {source!r}; distances are +inf", NoSourceWarning, stacklevel=2)
    d2 = _kernels.edt_sq(mask)
    values = np.sqrt(d2) * plan.resolution
    values.setflags(write=False)
    return DistanceMap(values, plan.resolution, plan.origin, has_source)


def sigma_for_label(prior, sigma_base):
    """Gaussian width for a label: ``sigma_base / prior``.

    Rarer labels get wider, more lenient fields. A zero prior yields ``inf``,
    meaning the label carries no information and scores a neutral constant.
    """
    if not sigma_base > 0:
        raise ValueError("sigma_base must be > 0")
    if not 0.0 <= prior <= 1.0:
        raise ValueError(f"prior must lie in [0, 1], got {prior}")
    if prior == 0.0:
        return math.inf
    return sigma_base / prior


def field_likelihood(distance, sigma):
    """Unnormalised Gaussian ``exp(-d^2 / (2 sigma^2))``; equals 1 at zero distance."""
    d = np.asarray(distance, dtype=np.float64)
    out = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LikelihoodFieldSet:
    occ: DistanceMap
    per_label: dict
    sigma_occ: float
    sigma: dict
    priors: dict

    @property
    def resolution(self):
        return self.occ.resolution

    @property
    def origin(self):
        return self.occ.origin

    def label_stack(self):
        """(3, H, W) distances in LABELS order, for vectorised lookups."""
        return np.stack([self.per_label[lab].values for lab in LABELS])

    def sigma_array(self):
        return np.array([self.sigma[lab] for lab in LABELS], dtype=np.float64)


def build_fields(plan, sigma_occ=DEFAULT_SIGMA_OCC, sigma_base=DEFAULT_SIGMA_BASE):
    if not sigma_occ > 0:
        raise ValueError("sigma_occ must be > 0")
    occ = build_distance_map(plan, OCCUPANCY)
    per_label, sigma, priors = {}, {}, {}
    with warnings.catch_warnings():
        # absent labels are expected (plans without windows)
        warnings.simplefilter("ignore", NoSourceWarning)
        for lab in LABELS:
            per_label[lab] = build_distance_map(plan, lab)
            priors[lab] = label_prior(plan, lab)
            sigma[lab] = sigma_for_label(priors[lab], sigma_base)
    return LikelihoodFieldSet(occ, per_label, float(sigma_occ), sigma, priors)


def dump_distance_png(dmap, path):
    """16-bit greyscale PNG of a distance map in cells, saturating at 65535."""
    cells = np.minimum(dmap.values / dmap.resolution, 65535.0)
    img = np.rint(cells).astype(np.uint16)[::-1]
    Image.fromarray(img).save(Path(path))


def dump_fields(fields, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / "field_occupancy.png"]
    dump_distance_png(fields.occ, paths[0])
    for lab in LABELS:
        paths.append(directory / f"field_{lab.name.lower()}.png")
        dump_distance_png(fields.per_label[lab], paths[-1])
    return paths
