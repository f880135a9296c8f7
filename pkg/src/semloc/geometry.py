import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap angles to [-pi, pi). In-range values are returned untouched."""
    if np.ndim(a) == 0:
        a = float(a)
        if -math.pi <= a < math.pi:
            return a
        w = (a + math.pi) % TWO_PI - math.pi
        return -math.pi if w >= math.pi else w
    a = np.asarray(a, dtype=np.float64)
    w = (a + np.pi) % TWO_PI - np.pi
    w = np.where(w >= np.pi, -np.pi, w)
    return np.where((a >= -np.pi) & (a < np.pi), a, w)


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self):
        return np.array([self.x, self.y, self.theta], dtype=np.float64)

    @classmethod
    def from_array(cls, a):
        return cls(a[0], a[1], a[2])

    def compose(self, other):
        """``self ⊕ other`` with ``other`` expressed in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
