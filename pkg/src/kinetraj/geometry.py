"""Kinetic group law, dilations, cylinders and the kinetic Hölder seminorm."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_HOLDER_POINTS = 5000

DIRECTIONS = ("backward", "forward", "two-sided")


def _vec(a) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(a, dtype=float)).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PhasePoint:
    """A point (t, x, v) of R^{1+2n}."""

    t: float
    x: np.ndarray
    v: np.ndarray

    def __init__(self, t, x, v):
        x, v = _vec(x), _vec(v)
        if x.ndim != 1 or x.shape != v.shape or x.size == 0:
            raise ValueError(f"x and v must be vectors of equal length n >= 1, got {x.shape} and {v.shape}")
        object.__setattr__(self, "t", float(t))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.x.size

    @classmethod
    def origin(cls, n: int = 1) -> "PhasePoint":
        return cls(0.0, np.zeros(n), np.zeros(n))

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "PhasePoint":
        """Build from a flat sequence (t, x_1..x_n, v_1..v_n)."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size < 3 or values.size % 2 == 0:
            raise ValueError("flat phase point needs 1 + 2n entries")
        n = (values.size - 1) // 2
        return cls(values[0], values[1 : 1 + n], values[1 + n :])

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t], self.x, self.v])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhasePoint):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.x, other.x) and np.array_equal(self.v, other.v)

    def __hash__(self) -> int:
        return hash((self.t, self.x.tobytes(), self.v.tobytes()))

    def __repr__(self) -> str:
        return f"PhasePoint(t={self.t!r}, x={self.x.tolist()!r}, v={self.v.tolist()!r})"


def _check_same_dim(p: PhasePoint, q: PhasePoint) -> None:
    if p.n != q.n:
        raise ValueError(f"dimension mismatch: n={p.n} vs n={q.n}")


def group_compose(p: PhasePoint, q: PhasePoint) -> PhasePoint:
    """Kinetic group product p ∘ q = (t1+t2, x1+x2+t2 v1, v1+v2)."""
    _check_same_dim(p, q)
    return PhasePoint(p.t + q.t, p.x + q.x + q.t * p.v, p.v + q.v)


def group_inverse(p: PhasePoint) -> PhasePoint:
    return PhasePoint(-p.t, -p.x + p.t * p.v, -p.v)


def dilate(r: float, p: PhasePoint) -> PhasePoint:
    """Kinetic dilation (r^2 t, r^3 x, r v)."""
    if not r > 0:
        raise ValueError(f"dilation factor must be positive, got {r}")
    return PhasePoint(r**2 * p.t, r**3 * p.x, r * p.v)


@dataclass(frozen=True)
class KineticCylinder:
    """Cylinder around ``center`` with time, position and velocity radii.

    Membership: the time offset lies in (-r1^2, 0), (0, r1^2) or (-r1^2, r1^2)
    depending on ``direction``; |x - x0 - (t - t0) v0| < r2^3 and |v - v0| < r3.
    All inequalities are strict.
    """

    center: PhasePoint
    radii: tuple
    direction: str = "backward"

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if len(radii) != 3 or min(radii) <= 0:
            raise ValueError(f"cylinder radii must be three positive reals, got {self.radii}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def unit(cls, r: float = 1.0, center: PhasePoint | None = None, direction: str = "backward", n: int = 1):
        return cls(center if center is not None else PhasePoint.origin(n), (r, r, r), direction)

    def time_interval(self) -> tuple[float, float]:
        t0, r1 = self.center.t, self.radii[0]
        if self.direction == "backward":
            return t0 - r1**2, t0
        if self.direction == "forward":
            return t0, t0 + r1**2
        return t0 - r1**2, t0 + r1**2

    def volume(self) -> float:
        """Lebesgue measure, using the unit-ball volume in R^n."""
        from math import gamma, pi

        n = self.center.n
        ball = pi ** (n / 2) / gamma(n / 2 + 1)
        lo, hi = self.time_interval()
        r1, r2, r3 = self.radii
        return (hi - lo) * ball * r2 ** (3 * n) * ball * r3**n

    def contains_arrays(self, t, x, v) -> np.ndarray:
        """Vectorised membership; x and v have a trailing axis of length n (or none for n=1)."""
        c = self.center
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if c.n == 1 and x.shape == t.shape:
            x = x[..., None]
            v = v[..., None]
        dt = t - c.t
        r1, r2, r3 = self.radii
        if self.direction == "backward":
            in_time = (dt > -(r1**2)) & (dt < 0)
        elif self.direction == "forward":
            in_time = (dt > 0) & (dt < r1**2)
        else:
            in_time = np.abs(dt) < r1**2
        drift = x - c.x - dt[..., None] * c.v
        in_x = np.linalg.norm(drift, axis=-1) < r2**3
        in_v = np.linalg.norm(v - c.v, axis=-1) < r3
        return in_time & in_x & in_v


def cylinder_contains(c: KineticCylinder, p: PhasePoint) -> bool:
    _check_same_dim(c.center, p)
    return bool(c.contains_arrays(np.array([p.t]), p.x[None, :], p.v[None, :])[0])


@dataclass
class HolderSample:
    points: list
    values: Sequence[float]
    alpha: float = 1.0

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValueError("points and values must have equal length")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class HolderEstimate:
    value: float
    pair: tuple | None
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


def kinetic_distance(p: PhasePoint, q: PhasePoint) -> float:
    """|x - y - (t - s) v|^{1/3} + |v - w| + |t - s|^{1/2}; uses v of the first point."""
    dt = p.t - q.t
    return float(
        np.linalg.norm(p.x - q.x - dt * p.v) ** (1 / 3) + np.linalg.norm(p.v - q.v) + abs(dt) ** 0.5
    )


def kinetic_holder_seminorm(s: HolderSample, max_points: int = MAX_HOLDER_POINTS) -> HolderEstimate:
    """Largest ratio |f(p) - f(q)| / d(p, q)^alpha over ordered pairs.

    Coincident points carrying different values give an infinite seminorm;
    the result is then flagged ``degenerate`` and ``pair`` names the culprits.
    """
    m = len(s.points)
    if m < 2:
        raise ValueError("need at least two sample points")
    if m > max_points:
        raise ValueError(f"{m} points exceeds the configured cap of {max_points}")
    t = np.array([p.t for p in s.points])
    x = np.array([p.x for p in s.points])
    v = np.array([p.v for p in s.points])
    f = np.asarray(s.values, dtype=float)

    best, best_pair = 0.0, None
    # one row of ordered pairs (i, ·) at a time keeps memory at O(N n)
    for i in range(m):
        dt = t[i] - t
        dx = np.linalg.norm(x[i] - x - dt[:, None] * v[i], axis=1)
        d = dx ** (1 / 3) + np.linalg.norm(v[i] - v, axis=1) + np.abs(dt) ** 0.5
        df = np.abs(f[i] - f)
        zero = d == 0
        if np.any(zero & (df > 0)):
            j = int(np.flatnonzero(zero & (df > 0))[0])
            return HolderEstimate(float("inf"), (i, j), degenerate=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(zero, 0.0, df / d**s.alpha)
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best, best_pair = float(ratio[j]), (i, j)
    return HolderEstimate(best, best_pair)
