"""Trajectory registration and Absolute Trajectory Error."""
import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import fmt_float
from .geometry import Pose2D, wrap_angle

#: column order of the summary tables
STAT_COLUMNS = ("rmse", "mean", "median", "std", "min", "max")
STAT_HEADERS = ("RMSE", "Mean", "Median", "Std. Dev.", "Min", "Max")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class TimedPose:
    t: float
    pose: Pose2D


@dataclass(frozen=True)
class RigidTransform2D:
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)
    scale: float = 1.0
    degenerate: bool = False

    def apply(self, xy):
        xy = np.asarray(xy, dtype=np.float64)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        r = np.array([[c, -s], [s, c]])
        return self.scale * xy @ r.T + np.asarray(self.translation)

    def apply_pose(self, pose):
        x, y = self.apply([pose.x, pose.y])
        return Pose2D(x, y, pose.theta + self.rotation)


@dataclass(frozen=True)
class AlignedPair:
    estimate: TimedPose
    truth: TimedPose


@dataclass(frozen=True)
class Association:
    pairs: list
    dropped: int


@dataclass(frozen=True)
class AteReport:
    per_step_error: list
    rmse: float
    mean: float
    median: float
    std: float
    min: float
    max: float
    heading_error: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, errors, heading_error=()):
        e = np.asarray(errors, dtype=np.float64)
        if e.size == 0:
            raise EvaluationError("no errors to summarise")
        srt = np.sort(e)
        return cls(
            per_step_error=[float(v) for v in e],
            rmse=float(math.sqrt(np.mean(e * e))),
            mean=float(np.mean(e)),
            median=float(srt[(e.size - 1) // 2]),  # lower median
            std=float(np.std(e)),
            min=float(srt[0]),
            max=float(srt[-1]),
            heading_error=[float(v) for v in heading_error],
        )

    def row(self):
        return [getattr(self, c) for c in STAT_COLUMNS]

    def summary(self):
        return {c: getattr(self, c) for c in STAT_COLUMNS}

    def to_json(self):
        return {"summary": self.summary(), "per_step_error": self.per_step_error,
                "heading_error": self.heading_error}


def time_align(est, gt, max_dt=0.05):
    """Pair each estimate with the nearest-in-time ground-truth pose within ``max_dt``."""
    if not est or not gt:
        raise EvaluationError("both trajectories must be non-empty")
    times = [g.t for g in gt]
    pairs, dropped = [], 0
    for e in est:
        i = bisect.bisect_left(times, e.t)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(gt):
                dt = abs(gt[j].t - e.t)
                if dt <= max_dt and (best is None or dt < best[0]):
                    best = (dt, j)
        if best is None:
            dropped += 1
        else:
            pairs.append(AlignedPair(e, gt[best[1]]))
    if not pairs:
        raise EvaluationError(f"no estimate lies within {max_dt} s of a ground-truth pose")
    return Association(pairs, dropped)


def _positions(pairs):
    est = np.array([[p.estimate.pose.x, p.estimate.pose.y] for p in pairs], dtype=np.float64)
    gt = np.array([[p.truth.pose.x, p.truth.pose.y] for p in pairs], dtype=np.float64)
    return est, gt


def horn_align(pairs, with_scale=False):
    """Closed-form rigid transform minimising sum ||gt_i - T(est_i)||^2.

    ``with_scale`` also fits a uniform scale; it is a diagnostic and not used
    for reported errors.
    """
    pairs = getattr(pairs, "pairs", pairs)
    if not pairs:
        raise EvaluationError("no pairs to align")
    est, gt = _positions(pairs)
    mu_e, mu_g = est.mean(axis=0), gt.mean(axis=0)
    a, b = est - mu_e, gt - mu_g
    sxx = float(np.dot(a[:, 0], b[:, 0]))
    syy = float(np.dot(a[:, 1], b[:, 1]))
    sxy = float(np.dot(a[:, 0], b[:, 1]))
    syx = float(np.dot(a[:, 1], b[:, 0]))
    num, den = sxy - syx, sxx + syy
    spread = float(np.sum(a * a))
    if len(pairs) < 2 or spread <= 1e-24 or (abs(num) <= 1e-24 and abs(den) <= 1e-24):
        t = mu_g - mu_e
        return RigidTransform2D(0.0, (float(t[0]), float(t[1])), 1.0, degenerate=True)
    theta = math.atan2(num, den)
    scale = math.hypot(num, den) / spread if with_scale else 1.0
    c, s = math.cos(theta), math.sin(theta)
    t = mu_g - scale * np.array([c * mu_e[0] - s * mu_e[1], s * mu_e[0] + c * mu_e[1]])
    return RigidTransform2D(theta, (float(t[0]), float(t[1])), scale)


def ate(pairs, transform=None):
    """Per-step translational error of ``g^-1 * T * x`` plus summary statistics."""
    pairs = getattr(pairs, "pairs", pairs)
    if not pairs:
        raise EvaluationError("no pairs")
    transform = transform or RigidTransform2D()
    est, gt = _positions(pairs)
    moved = transform.apply(est)
    err = np.hypot(moved[:, 0] - gt[:, 0], moved[:, 1] - gt[:, 1])
    heading = [
        abs(wrap_angle(p.estimate.pose.theta + transform.rotation - p.truth.pose.theta)) for p in pairs
    ]
    return AteReport.from_errors(err, heading)


def alignment_residual(pairs, transform):
    est, gt = _positions(getattr(pairs, "pairs", pairs))
    d = transform.apply(est) - gt
    return float(np.sum(d * d))


# -- files ---------------------------------------------------------------------

def read_trajectory(path):
    """CSV with header ``t,x,y,theta``."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(TimedPose(float(row["t"]), Pose2D(float(row["x"]), float(row["y"]), float(row["theta"]))))
            except (KeyError, ValueError) as exc:
                raise EvaluationError(f"{path}: bad row {row}: {exc}") from None
    if any(b.t <= a.t for a, b in zip(out, out[1:])):
        raise EvaluationError(f"{path}: timestamps must be strictly increasing")
    return out


def write_trajectory(path, traj):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "theta"])
        for tp in traj:
            w.writerow([fmt_float(tp.t), fmt_float(tp.pose.x), fmt_float(tp.pose.y), fmt_float(tp.pose.theta)])


def write_report(path, report, extra=None):
    doc = report.to_json()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_error_curve(path, pairs, report):
    pairs = getattr(pairs, "pairs", pairs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ate_m", "heading_err_rad"])
        for p, e, h in zip(pairs, report.per_step_error, report.heading_error):
            w.writerow([fmt_float(p.estimate.t), fmt_float(e), fmt_float(h)])


def format_table(rows):
    """Plain-text table: ``rows`` maps an approach name to an AteReport."""
    name_w = max([len("Approach")] + [len(n) for n in rows])
    head = "Approach".ljust(name_w) + "".join(h.rjust(11) for h in STAT_HEADERS)
    lines = [head]
    for name, rep in rows.items():
        lines.append(name.ljust(name_w) + "".join(f"{v:11.3f}" for v in rep.row()))
    return "\n".join(lines)
