"""Monte-Carlo localisation with semantic motion and sensor models.

Particles live in flat numpy arrays (``poses`` is N x 3, ``log_weights`` is
N); log-weights are canonical and ``weights`` are derived from them.
"""
import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ConfigError, fmt_float, read_kv, write_kv
from .fields import DEFAULT_SIGMA_BASE, DEFAULT_SIGMA_OCC
from .floorplan import Label, world_to_cells
from .geometry import Pose2D, wrap_angle
from .sensor import DEFAULT_MAX_RANGE, SensorError, raycast_batch, strip_ranges

__all__ = [
    "Pose2D", "Particle", "ParticleSet", "OdometryDelta", "MotionNoise",
    "SensorModelConfig", "FilterConfig", "FilterState", "Mode", "FilterDivergence",
    "init_global", "init_room", "motion_prior", "motion_update",
    "sensor_update_range", "sensor_update_ray", "beam_likelihood", "resample",
    "estimate_pose", "step",
]

# nudges range endpoints that sit exactly on a cell face into the cell being entered
_ENDPOINT_NUDGE = 1e-6


class FilterDivergence(RuntimeError):
    """Every particle has zero weight; the caller should re-initialise."""


class Mode(str, enum.Enum):
    RANGE = "range"  # range endpoints scored by label fields only
    COMBINED = "combined"  # range endpoints scored by occupancy and label fields
    RAY = "ray"  # no ranges: semantic raycasting

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"mode must be one of range/combined/ray, got {value!r}") from None


@dataclass(frozen=True)
class Particle:
    pose: Pose2D
    weight: float
    log_weight: float


def _logsumexp(a):
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return m + math.log(np.sum(np.exp(a - m)))


@dataclass(frozen=True, eq=False)
class ParticleSet:
    poses: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        poses = np.array(self.poses, dtype=np.float64).reshape(-1, 3)
        lw = np.array(self.log_weights, dtype=np.float64).reshape(-1)
        if lw.shape[0] != poses.shape[0]:
            raise ValueError("poses and log_weights differ in length")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def uniform(cls, poses):
        n = len(poses)
        return cls(poses, np.full(n, -math.log(n)))

    def __len__(self):
        return self.poses.shape[0]

    def __iter__(self):
        w = self.weights
        for p, wi, lwi in zip(self.poses, w, self.log_weights):
            yield Particle(Pose2D.from_array(p), float(wi), float(lwi))

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def normalised(self):
        total = _logsumexp(self.log_weights)
        if not np.isfinite(total):
            raise FilterDivergence("all particle weights are zero")
        return ParticleSet(self.poses, self.log_weights - total)

    def ess(self):
        w = self.normalised().weights
        return 1.0 / float(np.sum(w * w))


@dataclass(frozen=True)
class OdometryDelta:
    rot1: float
    trans: float
    rot2: float

    def __post_init__(self):
        if self.trans < 0:
            raise ValueError("trans must be >= 0")

    @classmethod
    def from_relative(cls, dx, dy, dtheta):
        """Decompose a motion expressed in the previous robot frame."""
        trans = math.hypot(dx, dy)
        rot1 = math.atan2(dy, dx) if trans > 1e-12 else 0.0
        return cls(rot1, trans, wrap_angle(dtheta - rot1))

    @classmethod
    def between(cls, p0, p1):
        rel = p0.inverse().compose(p1)
        return cls.from_relative(rel.x, rel.y, rel.theta)

    def as_relative(self):
        return (
            self.trans * math.cos(self.rot1),
            self.trans * math.sin(self.rot1),
            wrap_angle(self.rot1 + self.rot2),
        )


@dataclass(frozen=True)
class MotionNoise:
    alpha1: float = 0.1
    alpha2: float = 0.1
    alpha3: float = 0.05
    alpha4: float = 0.05

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3, self.alpha4) < 0:
            raise ValueError("motion noise coefficients must be >= 0")


@dataclass(frozen=True)
class SensorModelConfig:
    eps_rng: float = 0.25
    eps_lbl: float = 0.75
    sigma_occ: float = DEFAULT_SIGMA_OCC
    p_floor: float = 1e-3
    ghost_factor: float = 3.0
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        if self.eps_rng < 0 or self.eps_lbl < 0 or self.eps_rng + self.eps_lbl <= 0:
            raise ValueError("eps_rng and eps_lbl must be >= 0 with a positive sum")
        if not 0.0 < self.p_floor < 1.0:
            raise ValueError("p_floor must lie in (0, 1)")
        if self.ghost_factor < 0:
            raise ValueError("ghost_factor must be >= 0")
        if not self.sigma_occ > 0:
            raise ValueError("sigma_occ must be > 0")


@dataclass(frozen=True)
class FilterConfig:
    """Everything read from a filter configuration file."""

    sensor: SensorModelConfig = field(default_factory=SensorModelConfig)
    motion: MotionNoise = field(default_factory=MotionNoise)
    sigma_base: float = DEFAULT_SIGMA_BASE
    min_particles: int = 250
    max_particles: int = 1000
    seed: int = 0
    mode: Mode = Mode.COMBINED
    convergence_det: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.min_particles <= self.max_particles:
            raise ValueError("need 1 <= min_particles <= max_particles")
        object.__setattr__(self, "mode", Mode.parse(self.mode))

    def to_kv(self):
        s, m = self.sensor, self.motion
        return {
            "eps_rng": fmt_float(s.eps_rng), "eps_lbl": fmt_float(s.eps_lbl),
            "sigma_occ": fmt_float(s.sigma_occ), "sigma_base": fmt_float(self.sigma_base),
            "ghost_factor": fmt_float(s.ghost_factor), "p_floor": fmt_float(s.p_floor),
            "max_range": fmt_float(s.max_range),
            "alpha1": fmt_float(m.alpha1), "alpha2": fmt_float(m.alpha2),
            "alpha3": fmt_float(m.alpha3), "alpha4": fmt_float(m.alpha4),
            "min_particles": str(self.min_particles), "max_particles": str(self.max_particles),
            "seed": str(self.seed), "mode": self.mode.value,
            "convergence_det": fmt_float(self.convergence_det),
        }

    @classmethod
    def from_kv(cls, kv):
        d = cls()
        known = set(d.to_kv())
        unknown = set(kv) - known
        if unknown:
            raise ConfigError(f"unknown filter config keys: {sorted(unknown)}")
        g = lambda k, conv, default: conv(kv[k]) if k in kv else default  # noqa: E731
        try:
            s, m = d.sensor, d.motion
            sensor = SensorModelConfig(
                eps_rng=g("eps_rng", float, s.eps_rng), eps_lbl=g("eps_lbl", float, s.eps_lbl),
                sigma_occ=g("sigma_occ", float, s.sigma_occ), p_floor=g("p_floor", float, s.p_floor),
                ghost_factor=g("ghost_factor", float, s.ghost_factor),
                max_range=g("max_range", float, s.max_range),
            )
            motion = MotionNoise(*(g(f"alpha{i}", float, getattr(m, f"alpha{i}")) for i in range(1, 5)))
            return cls(
                sensor=sensor, motion=motion,
                sigma_base=g("sigma_base", float, d.sigma_base),
                min_particles=g("min_particles", int, d.min_particles),
                max_particles=g("max_particles", int, d.max_particles),
                seed=g("seed", int, d.seed), mode=g("mode", Mode.parse, d.mode),
                convergence_det=g("convergence_det", float, d.convergence_det),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def read_filter_config(path):
    return FilterConfig.from_kv(read_kv(path))


def write_filter_config(path, cfg):
    write_kv(path, cfg.to_kv())


@dataclass(frozen=True, eq=False)
class FilterState:
    particles: ParticleSet
    min_particles: int
    max_particles: int
    rng_seed: int = 0
    converged: bool = False
    convergence_det: float = 1e-6
    steps: int = 0
    ess: float = math.nan

    def __post_init__(self):
        if not self.min_particles <= len(self.particles) <= self.max_particles:
            raise ValueError(
                f"particle count {len(self.particles)} outside [{self.min_particles}, {self.max_particles}]"
            )


def _stream(seed, *keys):
    """Independent integer seed derived from a base seed and a path of keys."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *keys]).generate_state(1)[0])


# -- initialisation ---------------------------------------------------------

def init_global(plan, fields=None, max_particles=50000, seed=0, min_particles=None,
                convergence_det=1e-6):
    """Particles uniform over free cells with uniform heading."""
    free = np.flatnonzero(~plan.occupied.ravel())
    if free.size == 0:
        raise ValueError("plan has no free cells")
    rng = np.random.default_rng(seed)
    cells = free[rng.integers(0, free.size, max_particles)]
    row, col = np.divmod(cells, plan.width)
    lx = (col + rng.random(max_particles)) * plan.resolution
    ly = (row + rng.random(max_particles)) * plan.resolution
    ox, oy, oth = plan.origin
    c, s = math.cos(oth), math.sin(oth)
    theta = rng.uniform(-math.pi, math.pi, max_particles)
    poses = np.column_stack([ox + c * lx - s * ly, oy + s * lx + c * ly, wrap_angle(theta)])
    return FilterState(
        ParticleSet.uniform(poses),
        min_particles=max_particles if min_particles is None else min_particles,
        max_particles=max_particles, rng_seed=seed, convergence_det=convergence_det,
    )


def init_room(pose, sigma_xy, sigma_theta, n, seed=0, min_particles=None, max_particles=None,
              convergence_det=1e-6):
    """Gaussian particle cloud around a coarse pose guess."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (sigma_xy > 0 and sigma_theta > 0):
        raise ValueError("sigmas must be > 0")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, (n, 3)) * np.array([sigma_xy, sigma_xy, sigma_theta])
    poses = np.array([pose.x, pose.y, pose.theta]) + noise
    poses[:, 2] = wrap_angle(poses[:, 2])
    return FilterState(
        ParticleSet.uniform(poses),
        min_particles=n if min_particles is None else min_particles,
        max_particles=n if max_particles is None else max_particles,
        rng_seed=seed, convergence_det=convergence_det,
    )


# -- motion model -------------------------------------------------------------

def _ghost(distance, ghost_factor):
    if ghost_factor == 0.0:
        return np.ones_like(distance)
    if math.isinf(ghost_factor):
        return (distance == 0.0).astype(np.float64)
    return np.exp(-ghost_factor * distance)


def motion_prior_array(poses, plan, fields, ghost_factor):
    """Map prior for an (N, 3) pose array.

    Free cells score 1. Occupied cells score ``exp(-ghost_factor * d)`` with
    ``d`` the distance to the nearest door, so ``ghost_factor = 0`` lets
    particles pass through walls and a very large factor recovers a binary
    occupancy test. Off-map poses score 0.
    """
    poses = np.atleast_2d(poses)
    col, row, inside = world_to_cells(plan, poses[:, 0], poses[:, 1])
    occupied = plan.occupied[row, col]
    door = fields.per_label[Label.DOOR].values[row, col]
    prior = np.where(occupied, _ghost(door, ghost_factor), 1.0)
    return np.where(inside, prior, 0.0)


def motion_prior(pose, plan, fields, ghost_factor):
    return float(motion_prior_array([[pose.x, pose.y, pose.theta]], plan, fields, ghost_factor)[0])


def sample_motion(poses, odom, noise, rng):
    """Sample the rot-trans-rot odometry model for every pose."""
    n = poses.shape[0]
    r1, t, r2 = odom.rot1, odom.trans, odom.rot2
    a = noise
    sd_r1 = math.sqrt(a.alpha1 * r1 * r1 + a.alpha2 * t * t)
    sd_t = math.sqrt(a.alpha3 * t * t + a.alpha4 * (r1 * r1 + r2 * r2))
    sd_r2 = math.sqrt(a.alpha1 * r2 * r2 + a.alpha2 * t * t)
    eps = rng.normal(0.0, 1.0, (n, 3))
    h1 = r1 - sd_r1 * eps[:, 0]
    ht = t - sd_t * eps[:, 1]
    h2 = r2 - sd_r2 * eps[:, 2]
    out = np.empty_like(poses)
    heading = poses[:, 2] + h1
    out[:, 0] = poses[:, 0] + ht * np.cos(heading)
    out[:, 1] = poses[:, 1] + ht * np.sin(heading)
    out[:, 2] = wrap_angle(poses[:, 2] + h1 + h2)
    return out


def motion_update(state, odom, noise, plan, fields, ghost_factor, seed):
    """Propagate particles and fold the map prior into their log-weights.

    Zero-prior particles keep a ``-inf`` log-weight until the next resampling
    so the particle count stays fixed. Weights are not renormalised here.
    """
    rng = np.random.default_rng(seed)
    poses = sample_motion(state.particles.poses, odom, noise, rng)
    prior = motion_prior_array(poses, plan, fields, ghost_factor)
    with np.errstate(divide="ignore"):
        log_w = state.particles.log_weights + np.log(prior)
    return replace(state, particles=ParticleSet(poses, log_w))


# -- sensor models --------------------------------------------------------------

def _label_term(codes, dist_stack, sigmas, row, col, hit, p_floor):
    """Per-ray label likelihood; neutral ``p_floor`` for unlabeled, absent or missed rays."""
    k = codes.shape[0]
    out = np.full(row.shape, p_floor)
    for j in range(k):
        code = codes[j]
        if code == 0:
            continue
        sigma = sigmas[code - 1]
        if not math.isfinite(sigma):
            continue
        h = hit[:, j]
        d = dist_stack[code - 1][row[h, j], col[h, j]]
        out[h, j] = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return out


def sensor_update_range(state, scan, fields, cfg):
    """Weight particles by the mixture of occupancy and label fields at each range endpoint."""
    if not scan.has_ranges:
        raise SensorError("range-based update needs a range on every reading")
    poses = state.particles.poses
    bearings, ranges, codes = scan.bearings, scan.ranges, scan.label_codes
    ang = poses[:, 2:3] + bearings[None, :]
    reach = ranges[None, :] + _ENDPOINT_NUDGE * fields.resolution
    ex = poses[:, 0:1] + reach * np.cos(ang)
    ey = poses[:, 1:2] + reach * np.sin(ang)
    col, row, inside = world_to_cells(fields.occ, ex, ey)

    lik = np.zeros(ex.shape)
    if cfg.eps_rng > 0:
        d = fields.occ.values[row, col]
        lik += cfg.eps_rng * np.exp(-(d * d) / (2.0 * cfg.sigma_occ * cfg.sigma_occ))
    if cfg.eps_lbl > 0:
        lik += cfg.eps_lbl * _label_term(
            codes, fields.label_stack(), fields.sigma_array(), row, col, inside, cfg.p_floor
        )
    lik = np.where(inside, np.maximum(lik, cfg.p_floor), cfg.p_floor)
    log_w = state.particles.log_weights + np.log(lik).sum(axis=1)
    return replace(state, particles=ParticleSet(poses, log_w).normalised())


def sensor_update_ray(state, scan, plan, fields, cfg):
    """Semantic raycasting: score the observed label's field at each raycast hit.

    Only bearings and labels are read from the scan.
    """
    poses = state.particles.poses
    bearings, codes = scan.bearings, scan.label_codes
    col, row, _ = raycast_batch(plan, poses, bearings, cfg.max_range)
    hit = col >= 0
    lik = _label_term(codes, fields.label_stack(), fields.sigma_array(), row, col, hit, cfg.p_floor)
    lik = np.maximum(lik, cfg.p_floor)
    log_w = state.particles.log_weights + np.log(lik).sum(axis=1)
    return replace(state, particles=ParticleSet(poses, log_w).normalised())


def beam_likelihood(r_obs, r_cast, sigma_occ):
    """Gaussian hit term of the beam model; kept as a baseline."""
    d = np.asarray(r_obs, dtype=np.float64) - np.asarray(r_cast, dtype=np.float64)
    out = np.exp(-(d * d) / (2.0 * sigma_occ * sigma_occ))
    return float(out) if out.ndim == 0 else out


# -- resampling and estimation ------------------------------------------------

def weighted_mean_cov(poses, w):
    mx = float(np.dot(w, poses[:, 0]))
    my = float(np.dot(w, poses[:, 1]))
    mt = math.atan2(float(np.dot(w, np.sin(poses[:, 2]))), float(np.dot(w, np.cos(poses[:, 2]))))
    res = np.column_stack([poses[:, 0] - mx, poses[:, 1] - my, wrap_angle(poses[:, 2] - mt)])
    cov = (res * w[:, None]).T @ res
    return Pose2D(mx, my, mt), cov


def estimate_pose(state):
    """Weighted mean pose (circular mean heading) and its 3x3 covariance."""
    ps = state.particles.normalised()
    return weighted_mean_cov(ps.poses, ps.weights)


def adapted_count(det, state):
    """Particle budget: the maximum until the covariance determinant drops below
    the convergence threshold, then shrinking linearly with it towards the minimum."""
    if not det < state.convergence_det:
        return state.max_particles
    frac = max(det, 0.0) / state.convergence_det
    n = state.min_particles + frac * (state.max_particles - state.min_particles)
    return int(min(max(round(n), state.min_particles), state.max_particles))


def systematic_indices(w, n, u0):
    """Low-variance resampling: ``n`` evenly spaced pointers offset by ``u0`` in [0, 1/n)."""
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    pos = u0 + np.arange(n) / n
    return np.minimum(np.searchsorted(cdf, pos, side="right"), len(w) - 1)


def resample(state, seed):
    """Systematic resampling when the effective sample size falls below N/2."""
    ps = state.particles.normalised()
    w = ps.weights
    n = len(ps)
    ess = 1.0 / float(np.sum(w * w))
    _, cov = weighted_mean_cov(ps.poses, w)
    det = float(np.linalg.det(cov))
    converged = det < state.convergence_det
    if ess >= n / 2.0:
        return replace(state, particles=ps, converged=converged, ess=ess)
    n_new = adapted_count(det, state)
    rng = np.random.default_rng(seed)
    idx = systematic_indices(w, n_new, rng.random() / n_new)
    return replace(
        state, particles=ParticleSet.uniform(ps.poses[idx]), converged=converged, ess=ess,
    )


def step(state, odom, scan, mode, plan, fields, config):
    """One filter iteration: motion, sensor update, conditional resampling, estimate.

    ``odom`` may be None for the first frame. Returns ``(state, pose, cov)``.
    """
    mode = Mode.parse(mode)
    if mode is Mode.RAY:
        scan = strip_ranges(scan)
    elif not scan.has_ranges:
        raise SensorError(f"{mode.value} mode needs ranges on every reading")
    k = state.steps
    cfg = config.sensor
    if odom is not None:
        state = motion_update(state, odom, config.motion, plan, fields, cfg.ghost_factor,
                              _stream(state.rng_seed, k, 0))
    if mode is Mode.RAY:
        state = sensor_update_ray(state, scan, plan, fields, cfg)
    else:
        if mode is Mode.RANGE:
            cfg = replace(cfg, eps_rng=0.0, eps_lbl=1.0)
        state = sensor_update_range(state, scan, fields, cfg)
    state = resample(state, _stream(state.rng_seed, k, 1))
    state = replace(state, steps=k + 1)
    pose, cov = estimate_pose(state)
    return state, pose, cov
