"""Closed-form reference solutions used as ground truth across the package."""

from __future__ import annotations

from dataclasses import dataclass
from math import log, pi

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import PhasePoint
from .trajectory import ForcingPair, TrajectoryK2, connect, eval_states


@dataclass(frozen=True)
class EllipticityPair:
    """Diffusion bounds lam <= a <= Lam and the controlling quantity mu = 1/lam + Lam."""

    lam: float
    Lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.Lam < self.lam:
            raise ValueError(f"need lambda <= Lambda, got {self.lam} > {self.Lam}")

    @property
    def mu(self) -> float:
        return 1.0 / self.lam + self.Lam

    @classmethod
    def isotropic_for_mu(cls, mu: float, branch: str = "large") -> "EllipticityPair":
        """The constant coefficient a with a + 1/a = mu (requires mu >= 2)."""
        if mu < 2:
            raise ValueError(f"mu = 1/lambda + Lambda >= 2 for every admissible pair, got {mu}")
        disc = np.sqrt(mu * mu - 4.0)
        a = (mu + disc) / 2 if branch == "large" else (mu - disc) / 2
        return cls(float(a), float(a))


def _split_xv(x, v):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim == 0:
        x, v = x[None], v[None]
    if x.shape != v.shape:
        raise ValueError(f"x and v shapes differ: {x.shape} vs {v.shape}")
    return x, v


def fundamental_exponent(t, x, v):
    """-|v|^2/t + 3<v,x>/t^2 - 3|x|^2/t^3; x and v carry a trailing axis of length n."""
    t = np.asarray(t, dtype=float)
    x, v = _split_xv(x, v)
    vv = np.sum(v * v, axis=-1)
    vx = np.sum(v * x, axis=-1)
    xx = np.sum(x * x, axis=-1)
    return -vv / t + 3 * vx / t**2 - 3 * xx / t**3


def log_fundamental_solution(t, x, v, diffusion: float = 1.0):
    """log of the fundamental solution of (d_t + v.grad_x) f = a Lap_v f with constant a."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("the fundamental solution needs t > 0")
    x, v = _split_xv(x, v)
    n = x.shape[-1]
    a = float(diffusion)
    # a^n Gamma(a t, a x, v) solves the equation with diffusion a
    return n * log(a) + 0.5 * n * log(3.0) - n * log(2 * pi) - 2 * n * np.log(a * t) + fundamental_exponent(a * t, a * x, v)


def fundamental_solution(t, x, v, diffusion: float = 1.0):
    """(√3)^n (2π)^{-n} t^{-2n} exp(-|v|²/t + 3<v,x>/t² - 3|x|²/t³), evaluated via logs."""
    return np.exp(log_fundamental_solution(t, x, v, diffusion))


def truncated_fundamental(k: int, t, x, v):
    """Fundamental solution for t > 1/k, frozen at its t = 1/k profile below."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    t = np.asarray(t, dtype=float)
    return fundamental_solution(np.maximum(t, 1.0 / k), x, v)


def fundamental_mass(t: float, nodes: int = 200, width: float = 8.0) -> float:
    """Integral of the n = 1 fundamental solution over a box of ±width standard deviations."""
    sx, sv = np.sqrt(2 * t**3 / 3), np.sqrt(2 * t)
    u, w = leggauss(nodes)
    X, V = np.meshgrid(width * sx * u, width * sv * u, indexing="ij")
    W = np.outer(w, w) * (width * sx) * (width * sv)
    return float(np.sum(W * fundamental_solution(t, X[..., None], V[..., None])))


def weak_harnack_integral(p: float, k: float, t0: float = 1.0, n: int = 1) -> float:
    """Closed form of the integral of t^{2n - 2np} over (1/k, t0)."""
    if not 1.0 / k < t0:
        raise ValueError("need 1/k < t0")
    e = 2 * n - 2 * n * p + 1
    if abs(e) < 1e-15:
        return log(t0 * k)
    return (t0**e - k ** (-e)) / e


def sharpness_threshold(n: int) -> float:
    return 1.0 + 1.0 / (2 * n)


# -- Moser's ellipticity example ---------------------------------------------


def moser_counterexample(pair: EllipticityPair, t, v):
    """exp((1/(4 lam) - Lam) t - v1/(2 lam)) cos(v2), a solution of
    d_t f = lam d_{v1}^2 f + Lam d_{v2}^2 f, positive for |v2| < pi/2."""
    return moser_derivatives(pair, t, v)[0]


def moser_derivatives(pair: EllipticityPair, t, v):
    """(f, d_t f, d_{v1}^2 f, d_{v2}^2 f) in closed form."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    v1, v2 = v[..., 0], v[..., 1]
    if np.any(np.abs(v2) >= pi / 2):
        raise ValueError("the example is positive only for |v2| < pi/2")
    lam, Lam = pair.lam, pair.Lam
    growth = 1 / (4 * lam) - Lam
    f = np.exp(growth * t - v1 / (2 * lam)) * np.cos(v2)
    return f, growth * f, f / (4 * lam * lam), -f


def moser_log_ratio(pair: EllipticityPair) -> float:
    """log f(0, (0,0)) - log f(1, (1,0)), equal to Lambda + 1/(4 lambda)."""
    a = moser_counterexample(pair, 0.0, np.array([0.0, 0.0]))
    b = moser_counterexample(pair, 1.0, np.array([1.0, 0.0]))
    return float(np.log(a) - np.log(b))


def moser_lower_bound(pair: EllipticityPair) -> float:
    return 0.25 * (pair.Lam + 1 / pair.lam)


# -- action minimizer ----------------------------------------------------------


@dataclass(frozen=True)
class ActionMinimizer:
    trajectory: TrajectoryK2
    action: float

    def numeric_action(self, nodes: int = 16) -> float:
        """Gauss-Legendre value of the integral of |d/dr v(r)|^2 over (0, 1)."""
        u, w = leggauss(nodes)
        r = 0.5 * (u + 1)
        dv = eval_states(self.trajectory, r)["dv"]
        return float(0.5 * np.sum(w * np.sum(dv * dv, axis=-1)))


def minimal_action(p0: PhasePoint, p1: PhasePoint) -> float:
    """|v1 - v0|^2 + 3 |(v0 + v1) - 2 (x1 - x0)/(t1 - t0)|^2."""
    dt = p1.t - p0.t
    if dt == 0:
        raise ValueError("t0 == t1")
    a = p1.v - p0.v
    b = (p0.v + p1.v) - 2 * (p1.x - p0.x) / dt
    return float(a @ a + 3 * b @ b)


def action_minimizer(p0: PhasePoint, p1: PhasePoint) -> ActionMinimizer:
    """Cubic-in-r kinetic trajectory minimising the velocity-forcing energy."""
    traj = connect(p0, p1, ForcingPair.action_minimizer())
    return ActionMinimizer(traj, minimal_action(p0, p1))
