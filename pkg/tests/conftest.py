import sys

import numpy as np
import pytest

from semloc.floorplan import LABELS, SemanticFloorplan

UNLABELED = -1  # occupied structure without a label


def plan_from_codes(codes, resolution=1.0, origin=(0.0, 0.0, 0.0)):
    """Plan from a code grid in map orientation (row 0 is y = 0).

    0 free, 1 wall, 2 door, 3 window, -1 occupied but unlabeled.
    """
    codes = np.asarray(codes)
    occ = (codes != 0).astype(np.float64)
    labels = np.stack([(codes == int(lab)).astype(np.float64) for lab in LABELS])
    return SemanticFloorplan(occ, labels, resolution, origin)


def random_plan(rng, shape=(64, 64), density=0.1, resolution=1.0, label_p=(0.7, 0.2, 0.1)):
    occ = rng.random(shape) < density
    lab = rng.choice([1, 2, 3], size=shape, p=label_p)
    return plan_from_codes(np.where(occ, lab, 0), resolution)


def box_room(w=20, h=12, door=None, window=None):
    """Walled rectangle; ``door``/``window`` are (side, lo, hi) spans on the border."""
    codes = np.zeros((h, w), dtype=np.int8)
    codes[0, :] = codes[-1, :] = codes[:, 0] = codes[:, -1] = 1
    for span, code in ((door, 2), (window, 3)):
        if span is None:
            continue
        side, lo, hi = span
        if side == "bottom":
            codes[0, lo:hi] = code
        elif side == "top":
            codes[-1, lo:hi] = code
        elif side == "left":
            codes[lo:hi, 0] = code
        else:
            codes[lo:hi, -1] = code
    return codes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
