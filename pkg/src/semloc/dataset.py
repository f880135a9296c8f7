"""Trajectory datasets on disk.

* scan log: one scan per line, ``t theta_0 r_0 l_0 theta_1 r_1 l_1 ...`` with
  ``r = -1`` for a missing range and labels 0=none, 1=wall, 2=door, 3=window;
* odometry CSV: ``t,dx,dy,dtheta``, the motion since the previous row expressed
  in the previous robot frame (whitespace-separated files are accepted too);
* ground truth: ``t,x,y,theta`` (see :mod:`semloc.evaluation`).
"""
import csv
from dataclasses import dataclass
from pathlib import Path

from .config import fmt_float
from .floorplan import Label
from .mcl import OdometryDelta
from .sensor import SemanticReading, SemanticScan


class DatasetError(ValueError):
    pass


def format_scan(scan):
    parts = [fmt_float(scan.timestamp)]
    for r in scan.readings:
        parts += [fmt_float(r.bearing), "-1" if r.range is None else fmt_float(r.range),
                  str(0 if r.label is None else int(r.label))]
    return " ".join(parts)


def parse_scan(line):
    tok = line.split()
    if not tok or (len(tok) - 1) % 3:
        raise DatasetError(f"malformed scan line: {line[:60]!r}")
    t = float(tok[0])
    readings = []
    for i in range(1, len(tok), 3):
        rng = float(tok[i + 1])
        readings.append(SemanticReading(float(tok[i]), None if rng == -1 else rng, Label.from_code(tok[i + 2])))
    return SemanticScan(tuple(readings), t)


def write_scan_log(path, scans):
    with open(path, "w") as fh:
        for s in scans:
            fh.write(format_scan(s) + "\n")


def read_scan_log(path):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    return [parse_scan(ln) for ln in lines if ln.strip() and not ln.startswith("#")]


@dataclass(frozen=True)
class OdometryRecord:
    t: float
    dx: float
    dy: float
    dtheta: float

    def delta(self):
        return OdometryDelta.from_relative(self.dx, self.dy, self.dtheta)


def write_odometry(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "dx", "dy", "dtheta"])
        for r in records:
            w.writerow([fmt_float(r.t), fmt_float(r.dx), fmt_float(r.dy), fmt_float(r.dtheta)])


def read_odometry(path):
    out = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    for ln in lines:
        tok = ln.replace(",", " ").split()
        if not tok or tok[0] == "t" or tok[0].startswith("#"):
            continue
        if len(tok) != 4:
            raise DatasetError(f"{path}: expected 't dx dy dtheta', got {ln!r}")
        out.append(OdometryRecord(*map(float, tok)))
    return out
