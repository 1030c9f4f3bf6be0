"""Two-point kinetic trajectories driven by a pair of scalar forcings.

A trajectory joining p0 = (t0, x0, v0) to p1 = (t1, x1, v1) is

    t(r) = t0 + r δ,                      δ = t1 - t0
    x(r) = x0 + r δ v0 + δ (g1(r) m1 + g2(r) m2)
    v(r) = v0 + g1'(r) m1 + g2'(r) m2

for r in [0, 1], with (m1, m2) fixed by the endpoint condition at r = 1.
Every structured matrix below is a 2x2 array of scalars standing for
scalar * Id_n blocks.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import PhasePoint

CRITICAL = "critical-log-oscillation"
POWER = "power-pair"
ACTION = "action-minimizer"
CUSTOM = "custom"

R_FLOOR = 1e-8
DEFAULT_CAP_FACTOR = 100.0


class ConnectionImpossible(ValueError):
    """Raised when two points share the same time and cannot be joined."""


@dataclass(frozen=True)
class PowerSum:
    """sum_k c_k r^{e_k} with exact derivatives."""

    terms: tuple

    def __init__(self, terms: Sequence[tuple[float, float]]):
        object.__setattr__(self, "terms", tuple((float(c), float(e)) for c, e in terms))

    def derivatives(self, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        g = np.zeros_like(r)
        d1 = np.zeros_like(r)
        d2 = np.zeros_like(r)
        for c, e in self.terms:
            g = g + c * r**e
            d1 = d1 + c * e * r ** (e - 1)
            d2 = d2 + c * e * (e - 1) * r ** (e - 2)
        return g, d1, d2


Evaluator = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class ForcingPair:
    """Forcings g1, g2 with their first two derivatives.

    ``evaluator(r)`` returns ((g1, g1', g1''), (g2, g2', g2'')).
    """

    tag: str
    evaluator: Evaluator = field(repr=False)
    label: str = ""

    def __call__(self, r):
        return self.evaluator(np.asarray(r, dtype=float))

    def vanishes_at_zero(self, levels: int = 40) -> bool:
        r = 2.0 ** -np.arange(10, 10 + levels)
        (g1, d1, _), (g2, d2, _) = self(r)
        size = np.abs(g1) + np.abs(d1) + np.abs(g2) + np.abs(d2)
        return bool(size[-1] < 1e-3 * max(size[0], 1e-300) or size[-1] < 1e-6)

    @classmethod
    def critical(cls) -> "ForcingPair":
        return cls(CRITICAL, _critical_eval, "r^{3/2}cos(log r), r^{3/2}sin(log r)")

    @classmethod
    def action_minimizer(cls) -> "ForcingPair":
        return cls.power([(1 / 3, 3.0)], [(1 / 2, 2.0)], tag=ACTION)

    @classmethod
    def power(cls, g1_terms, g2_terms, tag: str = POWER) -> "ForcingPair":
        s1, s2 = PowerSum(g1_terms), PowerSum(g2_terms)

        def ev(r):
            return s1.derivatives(r), s2.derivatives(r)

        return cls(tag, ev, f"g1={s1.terms}, g2={s2.terms}")

    @classmethod
    def custom(cls, evaluator: Evaluator, label: str = "") -> "ForcingPair":
        return cls(CUSTOM, evaluator, label)


def _critical_eval(r):
    L = np.log(r)
    c, s = np.cos(L), np.sin(L)
    sq = np.sqrt(r)
    g1 = r * sq * c
    g2 = r * sq * s
    d1 = sq * (1.5 * c - s)
    d2 = sq * (1.5 * s + c)
    dd1 = (-0.25 * c - 2.0 * s) / sq
    dd2 = (-0.25 * s + 2.0 * c) / sq
    return (g1, d1, dd1), (g2, d2, dd2)


CRITICAL_PAIR = ForcingPair.critical()


@dataclass(frozen=True)
class BlockMatrix:
    """2x2 scalar matrix whose entries stand for scalar * Id_n blocks."""

    entries: np.ndarray
    dim_n: int = 1

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.shape != (2, 2):
            raise ValueError(f"block matrix needs a 2x2 scalar array, got {e.shape}")
        if self.dim_n < 1:
            raise ValueError("dim_n must be >= 1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def det(self) -> float:
        """Determinant of the full 2n x 2n matrix, i.e. the scalar det to the power n."""
        return float(_det2(self.entries)) ** self.dim_n

    def expand(self) -> np.ndarray:
        return np.kron(self.entries, np.eye(self.dim_n))

    def inverse(self) -> "BlockMatrix":
        return BlockMatrix(_inv2(self.entries), self.dim_n)

    def __matmul__(self, other):
        if isinstance(other, BlockMatrix):
            return BlockMatrix(self.entries @ other.entries, self.dim_n)
        return NotImplemented

    def apply(self, x, v) -> tuple[np.ndarray, np.ndarray]:
        a = self.entries
        x, v = np.asarray(x, float), np.asarray(v, float)
        return a[0, 0] * x + a[0, 1] * v, a[1, 0] * x + a[1, 1] * v


def _det2(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def _inv2(a: np.ndarray) -> np.ndarray:
    d = _det2(a)
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / d[..., None, None]


def _positive(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    return r


def forcing_eval(family: ForcingPair, r):
    """(g1, g1', g1'', g2, g2', g2'') at r > 0."""
    r = _positive(r)
    (g1, d1, dd1), (g2, d2, dd2) = family(r)
    return g1, d1, dd1, g2, d2, dd2


def wronskian_array(forcing: ForcingPair, r) -> np.ndarray:
    """Wronskian [[g1, g2], [g1', g2']] stacked along the leading axes of r."""
    r = _positive(r)
    (g1, d1, _), (g2, d2, _) = forcing(r)
    return np.stack([np.stack([g1, g2], -1), np.stack([d1, d2], -1)], -2)


def wronskian(forcing: ForcingPair, r: float, n: int = 1) -> BlockMatrix:
    return BlockMatrix(wronskian_array(forcing, r), n)


def wronskian_inverse_array(r) -> np.ndarray:
    """Closed-form inverse of the critical Wronskian."""
    r = _positive(r)
    L = np.log(r)
    c, s = np.cos(L), np.sin(L)
    sq = np.sqrt(r)
    r32 = r * sq
    row1 = np.stack([(1.5 * s + c) / r32, -s / sq], -1)
    row2 = np.stack([-(1.5 * c - s) / r32, c / sq], -1)
    return np.stack([row1, row2], -2)


def wronskian_inverse(r: float, n: int = 1) -> BlockMatrix:
    return BlockMatrix(wronskian_inverse_array(r), n)


def scaling_matrix(delta: float, n: int = 1) -> BlockMatrix:
    """D_δ = diag(δ, 1)."""
    if delta == 0:
        raise ValueError("scaling matrix is singular for delta = 0")
    return BlockMatrix(np.array([[delta, 0.0], [0.0, 1.0]]), n)


def galilean_matrix(delta: float, r: float, n: int = 1) -> BlockMatrix:
    """E_δ(r) = [[1, δ r], [0, 1]]."""
    return BlockMatrix(np.array([[1.0, delta * r], [0.0, 1.0]]), n)


def _scale_conj(m: np.ndarray, delta: float) -> np.ndarray:
    """D_δ m D_δ^{-1} for stacked 2x2 arrays."""
    out = np.array(m, dtype=float, copy=True)
    out[..., 0, 1] *= delta
    out[..., 1, 0] /= delta
    return out


def _galilean_array(delta: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 0, 1] = delta * r
    return out


def matrices_AB_array(delta: float, r, forcing: ForcingPair = CRITICAL_PAIR):
    """Stacked A_δ(r) = D W(r) W(1)^{-1} D^{-1} and B_δ(r) = E_δ(r) - A E_δ(1); r in [0, 1]."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise ValueError("r must lie in [0, 1]")
    w1_inv = _inv2(wronskian_array(forcing, 1.0))
    safe = np.where(r > 0, r, 1.0)
    w = wronskian_array(forcing, safe)
    # the forcings and their first derivatives vanish at r = 0
    w = np.where((r > 0)[..., None, None], w, 0.0)
    a = _scale_conj(w @ w1_inv, delta)
    b = _galilean_array(delta, r) - a @ _galilean_array(delta, 1.0)
    return a, b


def matrices_AB(delta: float, r: float, forcing: ForcingPair = CRITICAL_PAIR, n: int = 1):
    a, b = matrices_AB_array(delta, r, forcing)
    return BlockMatrix(a, n), BlockMatrix(b, n)


def inverse_A_array(delta: float, r, forcing: ForcingPair = CRITICAL_PAIR) -> np.ndarray:
    """A_δ(r)^{-1} = D W(1) W(r)^{-1} D^{-1}, blockwise, for r in (0, 1]."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    r = _positive(r)
    if forcing.tag == CRITICAL:
        w_inv = wronskian_inverse_array(r)
    else:
        w_inv = _inv2(wronskian_array(forcing, r))
    return _scale_conj(wronskian_array(forcing, 1.0) @ w_inv, delta)


@dataclass(frozen=True)
class TrajectoryK2:
    p0: PhasePoint
    p1: PhasePoint
    m1: np.ndarray
    m2: np.ndarray
    forcing: ForcingPair = CRITICAL_PAIR

    @property
    def delta(self) -> float:
        return self.p1.t - self.p0.t

    @property
    def n(self) -> int:
        return self.p0.n


def connect(p0: PhasePoint, p1: PhasePoint, forcing: ForcingPair = CRITICAL_PAIR) -> TrajectoryK2:
    """Solve for (m1, m2) so that the trajectory ends at p1."""
    if p0.n != p1.n:
        raise ValueError("endpoints must share the dimension n")
    delta = p1.t - p0.t
    if delta == 0:
        raise ConnectionImpossible("t0 == t1: no kinetic trajectory joins points at equal times")
    w1 = wronskian_array(forcing, 1.0)
    if abs(_det2(w1)) < 1e-14:
        raise ConnectionImpossible("W(1) is singular for this forcing pair")
    # right-hand side D^{-1}[(x1, v1) - E(1)(x0, v0)]
    rx = (p1.x - p0.x - delta * p0.v) / delta
    rv = p1.v - p0.v
    w1_inv = _inv2(w1)
    m1 = w1_inv[0, 0] * rx + w1_inv[0, 1] * rv
    m2 = w1_inv[1, 0] * rx + w1_inv[1, 1] * rv
    return TrajectoryK2(p0, p1, m1, m2, forcing)


def eval_states(traj: TrajectoryK2, r) -> dict:
    """Vectorised trajectory values; tangents are included only where r > 0.

    Returns arrays keyed by t, x, v (shape r.shape + (n,) for x, v) and,
    when every r > 0, dt, dx, dv.
    """
    r = np.asarray(r, dtype=float)
    if np.any((r < 0) | (r > 1)):
        raise ValueError("r must lie in [0, 1]")
    p0, delta = traj.p0, traj.delta
    safe = np.where(r > 0, r, 1.0)
    (g1, d1, dd1), (g2, d2, dd2) = traj.forcing(safe)
    zero = r == 0
    g1, d1, g2, d2 = (np.where(zero, 0.0, a) for a in (g1, d1, g2, d2))
    m1, m2 = traj.m1, traj.m2
    ex = lambda a: a[..., None]  # noqa: E731
    out = {
        "r": r,
        "t": p0.t + r * delta,
        "x": p0.x + ex(r) * delta * p0.v + delta * (ex(g1) * m1 + ex(g2) * m2),
        "v": p0.v + ex(d1) * m1 + ex(d2) * m2,
    }
    if not np.any(zero):
        out["dt"] = np.full(r.shape, delta)
        out["dx"] = delta * (p0.v + ex(d1) * m1 + ex(d2) * m2)
        out["dv"] = ex(dd1) * m1 + ex(dd2) * m2
    return out


def eval_trajectory(traj: TrajectoryK2, r: float, tangent: bool = False):
    """Point on the trajectory at r in [0, 1]; with ``tangent`` also (dt/dr, dv/dr).

    The tangent is refused at r = 0 where dv/dr has no limit.
    """
    if not 0 <= r <= 1:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if r == 0:
        if tangent:
            raise ValueError("tangent is undefined at r = 0")
        return traj.p0
    if r == 1 and not tangent:
        return traj.p1
    s = eval_states(traj, np.array([r]))
    point = PhasePoint(s["t"][0], s["x"][0], s["v"][0])
    if tangent:
        return point, (float(s["dt"][0]), s["dv"][0])
    return point


def endpoint_residual(traj: TrajectoryK2) -> float:
    s = eval_states(traj, np.array([0.0, 1.0]))
    res0 = max(abs(s["t"][0] - traj.p0.t), np.max(np.abs(s["x"][0] - traj.p0.x)), np.max(np.abs(s["v"][0] - traj.p0.v)))
    res1 = max(abs(s["t"][1] - traj.p1.t), np.max(np.abs(s["x"][1] - traj.p1.x)), np.max(np.abs(s["v"][1] - traj.p1.v)))
    return float(max(res0, res1))


def kinetic_residual(traj: TrajectoryK2, r) -> float:
    """max |dx/dr - dt/dr * v| over the sampled r > 0."""
    s = eval_states(traj, _positive(r))
    return float(np.max(np.abs(s["dx"] - s["dt"][..., None] * s["v"])))


def property4_ratios(traj: TrajectoryK2, r) -> np.ndarray:
    """Ratios of the three displacement / tangent bounds to their scale profiles.

    Column j is |lhs_j| / rhs_j at each r, where the right-hand sides are
    (|x0|+|x1|) r^{3/2} + |δ| r^{3/2}(|v0|+|v1|), then
    |δ|^{-1}(|x0|+|x1|) r^{1/2} + (|v0|+|v1|) r^{1/2}, then the same with r^{-1/2}.
    """
    r = _positive(r)
    s = eval_states(traj, r)
    p0, p1, delta = traj.p0, traj.p1, traj.delta
    X = np.linalg.norm(p0.x) + np.linalg.norm(p1.x)
    V = np.linalg.norm(p0.v) + np.linalg.norm(p1.v)
    lhs_x = np.linalg.norm(s["x"] - p0.x - r[:, None] * delta * p0.v, axis=-1)
    lhs_v = np.linalg.norm(s["v"] - p0.v, axis=-1)
    lhs_dv = np.linalg.norm(s["dv"], axis=-1)
    rhs_x = (X + abs(delta) * V) * r**1.5
    rhs_v = (X / abs(delta) + V) * r**0.5
    rhs_dv = (X / abs(delta) + V) * r**-0.5
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.stack([lhs_x / rhs_x, lhs_v / rhs_v, lhs_dv / rhs_dv], -1)
    return np.nan_to_num(out, nan=0.0)


def det_B_threshold(delta: float, level: float = 0.5, forcing: ForcingPair = CRITICAL_PAIR, samples: int = 4001) -> float:
    """Largest r0 on a uniform grid with det B_δ(r) >= level for all r in [0, r0]."""
    r = np.linspace(0.0, 1.0, samples)
    _, b = matrices_AB_array(delta, r, forcing)
    ok = _det2(b) >= level
    if not ok[0]:
        return 0.0
    bad = np.flatnonzero(~ok)
    return float(r[bad[0] - 1]) if bad.size else 1.0


def fit_loglog_slope(r: np.ndarray, y: np.ndarray, period: float | None = None) -> float:
    """Slope of log y against log r.

    Without ``period`` this is a least-squares line. With ``period`` set, y is
    assumed to be a power of r times a log-periodic factor; the slope is then
    the difference of the means of log y over the first and the last full
    period divided by their distance, which cancels the periodic factor.
    """
    lr, ly = np.log(r), np.log(np.abs(y))
    order = np.argsort(lr)
    lr, ly = lr[order], ly[order]
    if period is None:
        slope, _ = np.polyfit(lr, ly, 1)
        return float(slope)
    span = lr[-1] - lr[0]
    if span < 2 * period:
        raise ValueError("fit range must cover two modulation periods")

    def period_mean(a: float) -> float:
        grid = np.linspace(a, a + period, 4097)
        return float(np.trapezoid(np.interp(grid, lr, ly), grid) / period)

    return (period_mean(lr[-1] - period) - period_mean(lr[0])) / (span - period)


@dataclass(frozen=True)
class CriticalityReport:
    delta: float
    n: int
    det_exponent_fit: float
    inverse_column_exponent: float
    inverse_column_sup: float
    cap: float
    critical: bool
    family: str

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "n": self.n,
            "family": self.family,
            "det_exponent_fit": self.det_exponent_fit,
            "inverse_column_exponent": self.inverse_column_exponent,
            "inverse_column_sup": self.inverse_column_sup,
            "cap": self.cap,
            "verdict": "critical" if self.critical else "non-critical",
        }


def inverse_column_profile(delta: float, r, forcing: ForcingPair = CRITICAL_PAIR) -> np.ndarray:
    """max_i |(A_δ(r)^{-1})_{i;2}| at each r."""
    inv = inverse_A_array(delta, r, forcing)
    return np.max(np.abs(inv[..., :, 1]), axis=-1)


def criticality_profile(
    delta: float,
    n: int = 1,
    forcing: ForcingPair = CRITICAL_PAIR,
    cap_factor: float = DEFAULT_CAP_FACTOR,
    samples: int = 2000,
    fit_range: tuple[float, float] = (1e-7, 1e-1),
) -> CriticalityReport:
    """Scaling diagnostics of A_δ(r): det exponent, inverse-column exponent and sup."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    r = np.logspace(np.log10(R_FLOOR), 0.0, samples)
    a, _ = matrices_AB_array(delta, r, forcing)
    det_fit = n * fit_loglog_slope(r, _det2(a))
    col = inverse_column_profile(delta, r, forcing)
    sup = float(np.max(np.sqrt(r) * col))
    rf = np.logspace(np.log10(fit_range[0]), np.log10(fit_range[1]), samples)
    col_fit = inverse_column_profile(delta, rf, forcing)
    period = 2 * np.pi if forcing.tag == CRITICAL else None
    col_exp = fit_loglog_slope(rf, col_fit, period)
    cap = cap_factor * (1 + abs(delta))
    critical = abs(det_fit - 2 * n) <= 0.01 * 2 * n and np.isfinite(sup) and sup <= cap and abs(col_exp + 0.5) <= 0.02
    return CriticalityReport(float(delta), n, det_fit, col_exp, sup, cap, bool(critical), forcing.tag)


def trajectory_rows(traj: TrajectoryK2, samples: int) -> list[list[float]]:
    """Sample rows (r, t, x..., v..., dv...) on a uniform grid of (0, 1]."""
    if samples < 1:
        raise ValueError("need at least one sample")
    r = np.linspace(1.0 / samples, 1.0, samples)
    s = eval_states(traj, r)
    return [[r[i], s["t"][i], *s["x"][i], *s["v"][i], *s["dv"][i]] for i in range(samples)]


def trajectory_csv(traj: TrajectoryK2, samples: int) -> str:
    n = traj.n
    header = ["r", "t"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + [f"dv{i}" for i in range(n)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in trajectory_rows(traj, samples):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
