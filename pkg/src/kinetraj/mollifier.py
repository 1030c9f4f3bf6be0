"""Open-ended kinetic trajectories and the mollification they induce.

From a base point p = (t, x, v) and tangent data (m0, m1, m2) the map

    γ_t = t + m0 r
    γ_x = x + m0 r v + g1(r) m1 + m0 g2(r) m2
    γ_v = v + g1'(r) m1 / m0 + g2'(r) m2

moves along a kinetic path (d/dr γ_x = m0 γ_v). Averaging f over the
bump-weighted parameters (m1, m2) gives the mollification S_r f(p).

The mollification is a right translation p -> p ∘ q(m, r) in the kinetic
group, so (∂t + v·∇x) commutes with it only up to a defect coming from the
velocity part of q. ``transport_commutation_check`` measures the finite
difference residual and ``commutation_defect`` its h -> 0 limit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import PhasePoint
from .trajectory import CRITICAL_PAIR, ForcingPair, fit_loglog_slope

DEFAULT_NODES = 24
RULES = ("gauss-legendre", "tanh")
TANH_HALF_WIDTH = 2.0

FieldEvaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class OutOfSupport(ValueError):
    """The points reached by the mollification leave the field's support box."""


class InvalidExponents(ValueError):
    pass


@dataclass(frozen=True)
class TangentData:
    m0: float
    m1: np.ndarray
    m2: np.ndarray

    def __init__(self, m0, m1, m2):
        m1 = np.atleast_1d(np.asarray(m1, dtype=float))
        m2 = np.atleast_1d(np.asarray(m2, dtype=float))
        if m1.shape != m2.shape or m1.ndim != 1:
            raise ValueError("m1 and m2 must be vectors of equal length")
        if m0 == 0:
            raise ValueError("m0 must be nonzero")
        object.__setattr__(self, "m0", float(m0))
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)


def _forcing_at(forcing: ForcingPair, r: float):
    if r == 0:
        return 0.0, 0.0, 0.0, 0.0
    (g1, d1, _), (g2, d2, _) = forcing(np.asarray(float(r)))
    return float(g1), float(d1), float(g2), float(d2)


def exp_arrays(t, x, v, m0, m1, m2, r: float, forcing: ForcingPair = CRITICAL_PAIR):
    """Broadcasting version of the map; x, v, m1, m2 carry a trailing axis of length n."""
    if m0 == 0:
        raise ValueError("m0 must be nonzero")
    if r < 0:
        raise ValueError("r must be nonnegative")
    g1, d1, g2, d2 = _forcing_at(forcing, r)
    gt = t + m0 * r
    gx = x + m0 * r * v + g1 * m1 + m0 * g2 * m2
    gv = v + (d1 / m0) * m1 + d2 * m2
    return gt, gx, gv


def exp_map(base: PhasePoint, m: TangentData, r: float, forcing: ForcingPair = CRITICAL_PAIR) -> PhasePoint:
    if m.m1.size != base.n:
        raise ValueError("tangent data and base point dimensions differ")
    gt, gx, gv = exp_arrays(base.t, base.x, base.v, m.m0, m.m1, m.m2, r, forcing)
    return PhasePoint(gt, gx, gv)


def exp_jacobian(m0: float, r: float, forcing: ForcingPair = CRITICAL_PAIR, n: int = 1) -> np.ndarray:
    """Matrix of (m1, m2) -> (γ_x, γ_v), i.e. D W(r) D^{-1} with D = diag(m0, 1)."""
    g1, d1, g2, d2 = _forcing_at(forcing, r)
    block = np.array([[g1, m0 * g2], [d1 / m0, d2]])
    return np.kron(block, np.eye(n))


# -- kernel -------------------------------------------------------------------


def bump_profile(rho):
    """exp(-1/(1 - rho^2)) on |rho| < 1, zero elsewhere."""
    rho = np.asarray(rho, dtype=float)
    inside = np.abs(rho) < 1
    out = np.zeros_like(rho)
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out


def unit_rule(k: int, rule: str = "gauss-legendre"):
    """Nodes and weights on (-1, 1)."""
    if rule == "gauss-legendre":
        return leggauss(k)
    s = np.linspace(-TANH_HALF_WIDTH, TANH_HALF_WIDTH, k)
    return np.tanh(s), (s[1] - s[0]) / np.cosh(s) ** 2


@dataclass
class BumpKernel:
    """Product bump b(|m1|/σ) b(|m2|/σ) on the bidisc of radius σ.

    Weights are normalised on the same nodes used for integration, so
    constants are reproduced to rounding. ``square=True`` weights by χ²
    instead of χ. ``rule="tanh"`` swaps Gauss–Legendre for the trapezoid
    rule after u = tanh(s), which handles the flat edges of the bump far
    better (16 vs 32 nodes agree to ~1e-8 instead of ~1e-6).
    """

    sigma: float = 1.0
    n: int = 1
    nodes: int = DEFAULT_NODES
    square: bool = False
    profile: Callable = bump_profile
    rule: str = "gauss-legendre"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.n < 1 or self.nodes < 2:
            raise ValueError("need n >= 1 and at least two nodes")
        if self.rule not in RULES:
            raise ValueError(f"rule must be one of {RULES}")

    def weight(self, m1, m2) -> np.ndarray:
        m1 = np.asarray(m1, dtype=float)
        m2 = np.asarray(m2, dtype=float)
        w = self.profile(np.linalg.norm(m1, axis=-1) / self.sigma) * self.profile(
            np.linalg.norm(m2, axis=-1) / self.sigma
        )
        return w * w if self.square else w

    def quadrature(self, nodes: int | None = None):
        """Nodes (M, n), (M, n) and raw weights (M,) on the cube [-σ, σ]^{2n}."""
        k = self.nodes if nodes is None else nodes
        if k not in self._cache:
            u, w = unit_rule(k, self.rule)
            d = 2 * self.n
            grids = np.meshgrid(*([u] * d), indexing="ij")
            pts = np.stack([g.ravel() for g in grids], -1) * self.sigma
            wts = np.ones(pts.shape[0])
            for g in np.meshgrid(*([w] * d), indexing="ij"):
                wts = wts * g.ravel()
            wts = wts * self.sigma**d
            m1, m2 = pts[:, : self.n], pts[:, self.n :]
            chi = self.weight(m1, m2) * wts
            keep = chi > 0
            self._cache[k] = (m1[keep], m2[keep], chi[keep])
        return self._cache[k]

    def normalization(self, nodes: int | None = None) -> float:
        """c_χ, the integral of the kernel."""
        return float(np.sum(self.quadrature(nodes)[2]))

    def normalized_weights(self, nodes: int | None = None):
        m1, m2, chi = self.quadrature(nodes)
        return m1, m2, chi / chi.sum()


@dataclass(frozen=True)
class SampledField:
    """A vectorised f(t, x, v); x and v carry a trailing axis of length n.

    ``box`` is ((t_lo, t_hi), (x_lo, x_hi), (v_lo, v_hi)) with the spatial
    bounds applied to every component, or None for a field defined everywhere.
    """

    evaluator: FieldEvaluator
    box: tuple | None = None
    smooth: bool = True

    def covers(self, t, x, v) -> bool:
        if self.box is None:
            return True
        (t0, t1), (x0, x1), (v0, v1) = self.box
        return bool(
            np.all((t >= t0) & (t <= t1)) and np.all((x >= x0) & (x <= x1)) and np.all((v >= v0) & (v <= v1))
        )

    def __call__(self, t, x, v):
        if not self.covers(t, x, v):
            raise OutOfSupport("evaluation points leave the declared support box")
        return self.evaluator(t, x, v)


def gaussian_field(t_width: float = 1.0, x_width: float = 1.0, v_width: float = 1.0, center=(0.0, 0.0, 0.0)):
    """exp(-(t-t0)²/2a² - |x-x0|²/2b² - |v-v0|²/2c²), defined everywhere."""
    tc, xc, vc = center

    def ev(t, x, v):
        return np.exp(
            -0.5 * ((t - tc) / t_width) ** 2
            - 0.5 * np.sum(((x - xc) / x_width) ** 2, axis=-1)
            - 0.5 * np.sum(((v - vc) / v_width) ** 2, axis=-1)
        )

    return SampledField(ev)


def gaussian_l2_norm(t_width, x_width, v_width, n: int = 1, with_time: bool = True) -> float:
    sq = np.sqrt(np.pi) * x_width * (np.sqrt(np.pi) * v_width)
    norm2 = sq**n * (np.sqrt(np.pi) * t_width if with_time else 1.0)
    return float(np.sqrt(norm2))


# -- mollification --------------------------------------------------------------


def _check_m0(m0: float) -> None:
    if m0 not in (-1, 1):
        raise ValueError("mollification needs m0 = +1 or -1")


def mollify_arrays(
    f: SampledField,
    kernel: BumpKernel,
    r: float,
    m0: float,
    t,
    x,
    v,
    forcing: ForcingPair = CRITICAL_PAIR,
    nodes: int | None = None,
    chunk: int = 2_000_000,
) -> np.ndarray:
    """S_r f at many target points; t has shape (P,), x and v shape (P, n)."""
    _check_m0(m0)
    if r < 0:
        raise ValueError("r must be nonnegative")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.asarray(x, dtype=float).reshape(t.size, kernel.n)
    v = np.asarray(v, dtype=float).reshape(t.size, kernel.n)
    m1, m2, w = kernel.normalized_weights(nodes)
    step = max(1, chunk // len(w))
    out = np.empty(t.size)
    for s in range(0, t.size, step):
        sl = slice(s, s + step)
        gt, gx, gv = exp_arrays(
            t[sl, None], x[sl, None, :], v[sl, None, :], m0, m1[None], m2[None], r, forcing
        )
        gt = np.broadcast_to(gt, gx.shape[:-1])
        out[sl] = f(gt, gx, gv) @ w
    return out


def mollify(
    f: SampledField,
    kernel: BumpKernel,
    r: float,
    m0: float,
    p: PhasePoint,
    forcing: ForcingPair = CRITICAL_PAIR,
    nodes: int | None = None,
) -> float:
    """(1/c_χ) ∫ f(γ^{(m0, m1, m2)}(r; p)) χ_σ(m1, m2) d(m1, m2)."""
    if p.n != kernel.n:
        raise ValueError("kernel and point dimensions differ")
    return float(mollify_arrays(f, kernel, r, m0, [p.t], p.x[None], p.v[None], forcing, nodes)[0])


@dataclass(frozen=True)
class CommutationCheck:
    residual: float
    lhs: float
    rhs: float


def _directional_fd(f, t, x, v, dt, dx, h):
    """Centered difference of f along (dt, dx, 0); dx broadcasts against x."""
    return (f(t + h * dt, x + h * dx, v) - f(t - h * dt, x - h * dx, v)) / (2 * h)


def transport_commutation_check(
    f: SampledField,
    kernel: BumpKernel,
    r: float,
    p: PhasePoint,
    h: float,
    m0: float = 1.0,
    forcing: ForcingPair = CRITICAL_PAIR,
) -> CommutationCheck:
    """|(∂t + v·∇x) S_r f - S_r(m0 (∂t + v·∇x) f)| at p, both by centered differences."""
    _check_m0(m0)
    tv = np.array([p.t])
    xv, vv = p.x[None], p.v[None]

    def smoothed(t, x, v):
        return mollify_arrays(f, kernel, r, m0, t, x, v, forcing)

    lhs = float(_directional_fd(smoothed, tv, xv, vv, 1.0, p.v, h)[0])

    def transported(t, x, v):
        # transport derivative with the velocity of the evaluation point
        return m0 * _directional_fd(f, t, x, v, 1.0, v, h)

    rhs = float(mollify_arrays(SampledField(transported), kernel, r, m0, tv, xv, vv, forcing)[0])
    return CommutationCheck(abs(lhs - rhs), lhs, rhs)


@dataclass(frozen=True)
class CommutationStudy:
    steps: np.ndarray
    residuals: np.ndarray
    defect: float
    order: float

    def as_dict(self) -> dict:
        return {
            "steps": self.steps.tolist(),
            "residuals": self.residuals.tolist(),
            "defect": self.defect,
            "order": self.order,
        }


def commutation_defect(
    f: SampledField,
    kernel: BumpKernel,
    r: float,
    p: PhasePoint,
    steps=(1e-2, 5e-3, 2.5e-3),
    m0: float = 1.0,
    forcing: ForcingPair = CRITICAL_PAIR,
) -> CommutationStudy:
    """Residuals over a halving sequence of steps, their Richardson limit and the
    observed order of (residual - limit)."""
    steps = np.asarray(steps, dtype=float)
    checks = [transport_commutation_check(f, kernel, r, p, h, m0, forcing) for h in steps]
    signed = np.array([c.lhs - c.rhs for c in checks])
    limit = signed[-1] + (signed[-1] - signed[-2]) / 3.0
    err = np.abs(signed - limit)
    if len(steps) >= 3 and err[-2] > 0 and err[-3] > 0:
        order = float(np.log2(err[-3] / err[-2]))
    else:
        order = float("nan")
    return CommutationStudy(steps, np.abs(signed), float(abs(limit)), order)


# -- scaling lemmas ---------------------------------------------------------------


def young_theta(q: float) -> float:
    """θ with 1/2 + 1/θ = 1/q + 1."""
    if not q > 2:
        raise InvalidExponents(f"need q > 2, got {q}")
    return 1.0 / (1.0 / q + 0.5)


def expected_norm_slope(q: float, n: int = 1) -> float:
    return 2 * n * (1 / young_theta(q) - 1)


@dataclass(frozen=True)
class NormScaling:
    r: np.ndarray
    ratios: np.ndarray
    fitted_slope: float
    expected_slope: float

    def as_dict(self) -> dict:
        return {
            "r": self.r.tolist(),
            "ratios": self.ratios.tolist(),
            "fitted_slope": self.fitted_slope,
            "expected_slope": self.expected_slope,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "lq_over_l2"])
        for a, b in zip(self.r, self.ratios):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _lq_norm_on_grid(values: np.ndarray, cell: float, q: float) -> float:
    return float((np.sum(np.abs(values) ** q) * cell) ** (1 / q))


def mollifier_norm_scaling(
    kernel: BumpKernel,
    q: float,
    r_grid=None,
    grid: int = 128,
    m0: float = 1.0,
    forcing: ForcingPair = CRITICAL_PAIR,
    nodes: int | None = None,
) -> NormScaling:
    """Slope of log(‖S_r f_r‖_q / ‖f_r‖_2) against log r, n = 1.

    f_r is the L²-normalised Gaussian with position width r^{3/2} and velocity
    width r^{1/2}, the kinetic scale the mollifier averages over. For a fixed
    smooth f the ratio tends to ‖f‖_q/‖f‖_2 and carries no information about
    the operator norm; the adapted family saturates it.
    """
    if kernel.n != 1:
        raise ValueError("norm scaling is implemented for n = 1")
    expected = expected_norm_slope(q, 1)
    r_grid = np.geomspace(1e-3, 1e-1, 9) if r_grid is None else np.asarray(r_grid, dtype=float)
    reach = 2.0 * kernel.sigma
    ratios = []
    for r in r_grid:
        sx, sv = r**1.5, r**0.5
        f = gaussian_field(1.0, sx, sv)
        lx, lv = (6 + 3 * reach) * sx, (6 + reach) * sv
        xs = np.linspace(-lx, lx, grid)
        vs = np.linspace(-lv, lv, grid)
        X, V = np.meshgrid(xs, vs, indexing="ij")
        vals = mollify_arrays(f, kernel, r, m0, np.full(X.size, -m0 * r), X.reshape(-1, 1), V.reshape(-1, 1), forcing, nodes)
        cell = (xs[1] - xs[0]) * (vs[1] - vs[0])
        ratios.append(_lq_norm_on_grid(vals, cell, q) / gaussian_l2_norm(1.0, sx, sv, 1, with_time=False))
    ratios = np.array(ratios)
    slope = fit_loglog_slope(r_grid, ratios)
    return NormScaling(r_grid, ratios, float(slope), expected)


@dataclass(frozen=True)
class IntegratedBound:
    taus: np.ndarray
    lhs_norm: np.ndarray
    rhs_bound: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.rhs_bound > 0, self.lhs_norm / self.rhs_bound, 0.0)

    def as_dict(self) -> dict:
        return {
            "taus": self.taus.tolist(),
            "lhs_norm": self.lhs_norm.tolist(),
            "rhs_bound": self.rhs_bound.tolist(),
            "ratios": self.ratios.tolist(),
        }


def check_integrated_exponents(k: float, p: float, q: float, theta: float, h: float, n: int = 1) -> float:
    """Validate the exponent relations; return the power of τ in the bound."""
    if k < -0.5:
        raise InvalidExponents(f"need k >= -1/2, got {k}")
    if abs(0.5 + 1 / theta - 1 / q - 1) > 1e-12:
        raise InvalidExponents("1/2 + 1/theta must equal 1/q + 1")
    if abs(0.5 + 1 / h - 1 / p - 1) > 1e-12:
        raise InvalidExponents("1/2 + 1/h must equal 1/p + 1")
    gap = k + (1 / theta - 1) * 2 * n + 1 / h
    if gap < -1e-12:
        raise InvalidExponents(f"k + 2n(1/theta - 1) must be >= -1/h (short by {-gap})")
    return k + 2 * n * (1 / theta - 1) + 1 / h


def integrated_mollifier_bound(
    kernel: BumpKernel,
    k: float = -0.5,
    p: float = 3.0,
    q: float = 3.0,
    theta: float = 1.2,
    h: float = 1.2,
    taus=(0.1, 0.2, 0.4),
    amplitude: float = 1.0,
    m0: float = 1.0,
    t_nodes: int = 24,
    xv_nodes: int = 32,
    r_nodes: int = 12,
    m_nodes: int = 12,
    forcing: ForcingPair = CRITICAL_PAIR,
) -> IntegratedBound:
    """‖∫_0^τ r^k S_r f dr‖_{L^p_t L^q_{x,v}} for a unit Gaussian f times ``amplitude``,
    against σ^{2n(1/θ-1)} τ^{k + 2n(1/θ-1) + 1/h} ‖f‖_2 (n = 1)."""
    if kernel.n != 1:
        raise ValueError("the integrated bound is implemented for n = 1")
    power = check_integrated_exponents(k, p, q, theta, h, 1)
    taus = np.asarray(taus, dtype=float)
    f0 = gaussian_field()
    f = SampledField(lambda t, x, v: amplitude * f0.evaluator(t, x, v))
    l2 = abs(amplitude) * gaussian_l2_norm(1.0, 1.0, 1.0, 1)

    u, wu = leggauss(r_nodes)
    s = 0.5 * (u + 1)
    ws = 0.5 * wu
    tu, tw = leggauss(t_nodes)
    xu, xw = leggauss(xv_nodes)
    lhs = []
    for tau in taus:
        # r = tau s^{1/(k+1)} turns r^k dr into tau^{k+1}/(k+1) ds
        rs = tau * s ** (1 / (k + 1))
        lt = 5.0 + tau
        lx, lv = 6.0 + 3 * tau, 6.0
        T = lt * tu - m0 * tau / 2
        X, V = np.meshgrid(lx * xu, lv * xu, indexing="ij")
        wxv = np.outer(xw, xw).ravel() * lx * lv
        acc = np.zeros((t_nodes, X.size))
        for r, wr in zip(rs, ws):
            tt = np.repeat(T, X.size)
            xx = np.tile(X.ravel(), t_nodes)[:, None]
            vv = np.tile(V.ravel(), t_nodes)[:, None]
            vals = mollify_arrays(f, kernel, float(r), m0, tt, xx, vv, forcing, m_nodes)
            acc += wr * vals.reshape(t_nodes, -1)
        acc *= tau ** (k + 1) / (k + 1)
        inner = (np.abs(acc) ** q @ wxv) ** (1 / q)
        lhs.append(float((np.sum(tw * lt * inner**p)) ** (1 / p)))
    rhs = kernel.sigma ** (2 * (1 / theta - 1)) * taus**power * l2
    return IntegratedBound(taus, np.array(lhs), rhs)


# -- invariants -------------------------------------------------------------------


def change_of_variables_check(
    f: SampledField,
    kernel: BumpKernel,
    r: float,
    m0: float,
    p: PhasePoint,
    nodes: int = 48,
    forcing: ForcingPair = CRITICAL_PAIR,
) -> tuple[float, float]:
    """Both sides of ∫ f(γ^m(r; p)) χ dm = r^{-2n} ∫ f(t + m0 r, y, w) χ(Φ^{-1}(y, w)) d(y, w).

    Φ(m) = E(x, v) + M m is the affine map m -> (γ_x, γ_v); the right side is
    integrated over the bounding box of Φ(supp χ).
    """
    n = kernel.n
    m1, m2, chi = kernel.quadrature(nodes)
    gt, gx, gv = exp_arrays(p.t, p.x[None], p.v[None], m0, m1, m2, r, forcing)
    lhs = float(f(np.full(len(chi), gt), gx, gv) @ chi)

    M = exp_jacobian(m0, r, forcing, n)
    shift = np.concatenate([p.x + m0 * r * p.v, p.v])
    half = np.abs(M).sum(axis=1) * kernel.sigma
    u, w = leggauss(nodes)
    d = 2 * n
    grids = np.meshgrid(*([u] * d), indexing="ij")
    pts = shift + np.stack([g.ravel() for g in grids], -1) * half
    wts = np.ones(pts.shape[0]) * np.prod(half)
    for g in np.meshgrid(*([w] * d), indexing="ij"):
        wts = wts * g.ravel()
    pre = np.linalg.solve(M, (pts - shift).T).T
    weight = kernel.weight(pre[:, :n], pre[:, n:])
    keep = weight > 0
    y, z = pts[keep, :n], pts[keep, n:]
    vals = f(np.full(keep.sum(), p.t + m0 * r), y, z)
    rhs = float(np.sum(vals * weight[keep] * wts[keep])) / abs(np.linalg.det(M))
    return lhs, rhs


def velocity_spread_constant(
    forcing: ForcingPair = CRITICAL_PAIR,
    n: int = 1,
    samples: int = 2000,
    seed: int = 0,
    r_range=(1e-6, 1.0),
) -> float:
    """Largest |γ_v - v| / ((|m1|/|m0| + |m2|) r^{1/2}) over random tangent data and r."""
    rng = np.random.default_rng(seed)
    r = np.exp(rng.uniform(np.log(r_range[0]), np.log(r_range[1]), samples))
    m0 = rng.choice([-1.0, 1.0], samples) * rng.uniform(0.2, 5.0, samples)
    m1 = rng.normal(size=(samples, n))
    m2 = rng.normal(size=(samples, n))
    (_, d1, _), (_, d2, _) = forcing(r)
    dv = (d1 / m0)[:, None] * m1 + d2[:, None] * m2
    scale = (np.linalg.norm(m1, axis=1) / np.abs(m0) + np.linalg.norm(m2, axis=1)) * np.sqrt(r)
    return float(np.max(np.linalg.norm(dv, axis=1) / scale))


def mollification_error_rate(
    f: SampledField,
    kernel: BumpKernel,
    p: PhasePoint,
    r_grid=None,
    m0: float = 1.0,
    forcing: ForcingPair = CRITICAL_PAIR,
) -> tuple[np.ndarray, np.ndarray, float]:
    """|S_r f(p) - f(p)| over r and its fitted log-log rate."""
    r_grid = np.geomspace(1e-6, 1e-2, 9) if r_grid is None else np.asarray(r_grid, dtype=float)
    f0 = float(f(np.array([p.t]), p.x[None], p.v[None])[0])
    err = np.array([abs(mollify(f, kernel, float(r), m0, p, forcing) - f0) for r in r_grid])
    return r_grid, err, float(fit_loglog_slope(r_grid, err))
