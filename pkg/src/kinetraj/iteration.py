"""Explicit constants for reverse-Hölder iterations on nested sets and the
exponential-decomposition lemma that combines them with a log level-set bound."""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, log

import numpy as np
from scipy.special import logsumexp

EXPONENT_READING = "exponent"
DISPLAYED_READING = "displayed"
SMALLP_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class IterationParams:
    C: float = 1.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    kappa: float = 2.0
    p: float = 1.0
    mu: float = 1.0
    p0: float | None = None

    def __post_init__(self):
        if self.kappa <= 1:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if self.mu < 1:
            raise ValueError("mu must be >= 1")
        if self.p <= 0:
            raise ValueError("p must be positive")


def moser_constant_unbounded(params: IterationParams) -> tuple[float, float]:
    """(M, exponent of 1/(1-δ)) for the iteration that runs all the way to the supremum."""
    C, g1, g2, k, p, mu = params.C, params.gamma1, params.gamma2, params.kappa, params.p, params.mu
    a = k / (k - 1)
    M = C**a * (1 + mu * p) ** (g1 * a) * 2 ** (g2 * k**2 / (k - 1) ** 2) * k ** (g1 * k / (k - 1) ** 2)
    return float(M), float(g2 * a)


def moser_recursion_unbounded(params: IterationParams, terms: int = 400) -> float:
    """Product over the chain α_j = p κ^j, σ_j = δ + (1-δ) 2^{-j} of the per-step factors
    C (1 + μ α_j)^{γ1} 2^{γ2 (j+1)}, each raised to κ^{-j}."""
    C, g1, g2, k, p, mu = params.C, params.gamma1, params.gamma2, params.kappa, params.p, params.mu
    j = np.arange(terms, dtype=float)
    w = k**-j
    logs = np.log(C) + g1 * np.log1p(mu * p * k**j) + g2 * (j + 1) * log(2.0)
    return float(np.exp(np.sum(w * logs)))


def moser_constant_stopped(params: IterationParams, reading: str = EXPONENT_READING, delta: float | None = None):
    """(M, γ0) for the iteration stopped at p0 < κ.

    ``reading`` picks how γ0 is interpreted: the exponent γ2 κ (1+κ)/(κ-1)
    (default), or the expression (1-δ)^{that exponent} taken literally, which
    needs ``delta``.
    """
    p0 = params.p0
    if p0 is None:
        raise ValueError("the stopped iteration needs p0")
    k = params.kappa
    if not 0 < p0 < k:
        raise ValueError(f"need 0 < p0 < kappa, got p0 = {p0}")
    a = k / (k - 1) * (1 + k)
    M = (
        2 ** (params.gamma2 * k**3 * (1 + k) / (k - 1) ** 3)
        * params.C**a
        * (1 + params.mu * p0 / (k - p0)) ** (params.gamma1 * a)
    )
    expo = params.gamma2 * k * (1 + k) / (k - 1)
    if reading == EXPONENT_READING:
        return float(M), float(expo)
    if reading == DISPLAYED_READING:
        if delta is None or not 0 < delta < 1:
            raise ValueError("the displayed reading needs delta in (0, 1)")
        return float(M), float((1 - delta) ** expo)
    raise ValueError(f"unknown reading {reading!r}")


def moser_constant_stopped_uniform(params: IterationParams) -> float:
    """Bound for M valid for every p0 with μ p0 <= 1 (p0 < κ/2 ensures p0/(κ-p0) <= 2 p0/κ)."""
    k = params.kappa
    a = k / (k - 1) * (1 + k)
    return float(2 ** (params.gamma2 * k**3 * (1 + k) / (k - 1) ** 3) * params.C**a * (1 + 1.0 / (k - 1)) ** (params.gamma1 * a))


@dataclass(frozen=True)
class SmallPResult:
    M: float
    gamma0: float
    iterations: int
    crossing: int
    phase: float

    def as_dict(self) -> dict:
        return {
            "M": self.M,
            "gamma0": self.gamma0,
            "iterations": self.iterations,
            "crossing": self.crossing,
            "phase": self.phase,
            "label": "computed, not a closed form",
        }


def _smallp_log_sum(C, g1, g2, k, pmu, theta, max_terms=400):
    """Σ_i κ^{θ-i} [log C + γ2 (i+1) log 2] + Σ_i max(small_i, large_i) with a closed tail bound.

    Exponents run along α_i = p κ^{i-θ} (the lattice κ^{j+1/2} never hits 1);
    every μ-dependent factor is majorised through pμ only.
    """
    s = 1.0 / np.sqrt(k)
    c_small = 1.0 / (1.0 - s)  # α/(1-α) <= c_small α for α <= κ^{-1/2}
    c_large = 1.0 / (1.0 - s)  # α/(α-1) <= c_large for α >= κ^{1/2}
    total = 0.0
    for i in range(max_terms):
        w = k ** (theta - i)
        base = w * (log(C) + g2 * (i + 1) * log(2.0))
        # p/α_i = κ^{θ-i}, μ α_i = pμ κ^{i-θ}
        small = g1 * w * np.log1p(c_small * pmu / w)
        large = g1 * c_large * pmu * w
        total += base + max(small, large)
        # tail: w' <= w κ^{-1}/(1-1/κ) summed against the largest per-term growth
        tail_w = w / (k - 1)
        tail = tail_w * (log(C) + g2 * (i + 3) * log(2.0) * k / (k - 1) + g1 * c_large * pmu) + g1 * tail_w * (
            np.log1p(c_small * pmu / tail_w) + 1.0
        )
        if tail < SMALLP_TAIL_TOL * max(1.0, total):
            return total + tail, i + 1
    raise RuntimeError("small-p recursion did not settle")


def moser_smallp(params: IterationParams, phases: int = 64) -> SmallPResult:
    """Constants for the iteration started at any p < 1/μ, depending on (C, γ1, γ2, κ) only.

    The start exponent is lowered to the lattice point p' = κ^{j+1/2} in
    (p/κ, p]; the resulting bound is maximised over the lattice phase so it
    does not depend on where p sits. Every factor grows with pμ, so pμ is
    replaced by its supremum 1.
    """
    C, g1, g2, k, p, mu = params.C, params.gamma1, params.gamma2, params.kappa, params.p, params.mu
    if not p < 1.0 / mu:
        raise ValueError(f"need p < 1/mu = {1 / mu}, got {p}")
    pmu = 1.0
    best, best_theta, its = -np.inf, 0.0, 0
    for theta in np.linspace(0.0, 1.0, phases, endpoint=False):
        val, n = _smallp_log_sum(C, g1, g2, k, pmu, theta)
        if val > best:
            best, best_theta = val, float(theta)
        its = max(its, n)
    gamma0 = g2 * k * k / (k - 1)
    crossing = int(np.ceil(np.log(1.0 / p) / np.log(k)))
    return SmallPResult(float(exp(best)), float(gamma0), its, crossing, best_theta)


# -- nested families ---------------------------------------------------------------


@dataclass
class NestedFamily:
    """Sampled function on U_1 with quadrature weights; a sample belongs to U_σ when depth < σ."""

    values: np.ndarray
    weights: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.depth = np.asarray(self.depth, dtype=float)
        if not (self.values.shape == self.weights.shape == self.depth.shape):
            raise ValueError("values, weights and depth must align")
        if np.any(self.weights < 0):
            raise ValueError("negative weights")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def mask(self, sigma: float) -> np.ndarray:
        return self.depth < sigma

    def norm(self, sigma: float, q: float) -> float:
        m = self.mask(sigma)
        if not m.any():
            return 0.0
        f = np.abs(self.values[m])
        if np.isinf(q):
            return float(f.max())
        return float(np.sum(self.weights[m] * f**q) ** (1.0 / q))

    def log_norm(self, sigma: float, q: float) -> float:
        m = self.mask(sigma)
        if not m.any():
            return -np.inf
        lf = np.log(np.abs(self.values[m]))
        if np.isinf(q):
            return float(lf.max())
        return float(logsumexp(q * lf, b=self.weights[m]) / q)

    def level_measure(self, s: float) -> float:
        with np.errstate(divide="ignore"):
            lg = np.log(self.values)
        return float(self.weights[lg > s].sum())

    @classmethod
    def interval(cls, f, nodes: int = 4000) -> "NestedFamily":
        """U_σ = (-σ, σ) with normalised Lebesgue measure, midpoint samples."""
        x = -1 + (np.arange(nodes) + 0.5) * 2 / nodes
        return cls(f(x), np.full(nodes, 1.0 / nodes), np.abs(x))


@dataclass(frozen=True)
class BombieriGiustiResult:
    holds: bool
    M: float | None
    lhs: float
    rhs: float | None
    violation: dict | None = None
    tau: float | None = None
    log_M: float | None = None

    def as_dict(self) -> dict:
        return {
            "holds": self.holds,
            "M": self.M,
            "log_M": self.log_M,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "violation": self.violation,
            "tau": self.tau,
        }


def _beta_grid(beta0: float, eta: float, count: int = 160, span: float = 1e-8) -> np.ndarray:
    top = min(1.0, eta * beta0)
    return np.geomspace(top * span, top, count)


def _inv(beta0: float) -> float:
    return 0.0 if np.isinf(beta0) else 1.0 / beta0


def _decomposition_bound(psi, d: float, beta0: float, C1: float, C2: float, gamma: float, betas):
    """Upper bound for the log-norm on the smaller set given the log-norm psi > 0 on the larger.

    Splits the larger set at f = exp(psi/2); the upper piece is controlled by
    Hölder and the level-set hypothesis, then the reverse-Hölder hypothesis
    lifts the L^β norm back to L^β0. Vectorised over psi.
    """
    ib0 = _inv(beta0)
    psi = np.atleast_1d(np.asarray(psi, dtype=float))[:, None]
    b = np.asarray(betas, dtype=float)[None, :]
    big = b * psi + (1 - b * ib0) * np.log(2 * C2 / psi)
    body = np.logaddexp(big, b * psi / 2)
    best = np.min((1 / b - ib0) * (log(C1) - gamma * log(d)) + body / b, axis=1)
    # the norm on a smaller set never exceeds the one on the larger set
    return np.minimum(best, psi[:, 0])


def contraction_offset(d: float, beta0: float, C1: float, C2: float, gamma: float, eta: float) -> float:
    """sup over psi > 0 of [bound(psi) - (3/4) psi], clipped at 0.

    The supremum sits near psi ~ (C1/d^γ)^2, so the psi range is scaled with it.
    """
    scale = max(C1 / d**gamma, 1.0)
    psi_max = 1e6 * scale**3
    betas = _beta_grid(beta0, eta, 240, min(1e-8, 0.1 / psi_max))
    psis = np.geomspace(1e-3, psi_max, 800)
    vals = _decomposition_bound(psis, d, beta0, C1, C2, gamma, betas) - 0.75 * psis
    return float(max(0.0, vals.max()))


def bombieri_giusti_log_constant(beta0: float, C1: float, C2: float, delta: float, eta: float, gamma: float):
    """log M and the ratio τ of the σ-sequence σ_i = 1 - (1-δ) τ^i it was optimised over.

    log M = Σ_i (3/4)^i K(σ_{i+1} - σ_i); the sum only converges for τ close
    enough to 1, so a range of τ is tried and the smallest finite value kept.
    """
    best, best_tau = np.inf, None
    for tau in (0.5, 0.7, 0.8, 0.9, 0.95, 0.98):
        total, prev = 0.0, np.inf
        for i in range(400):
            d = (1 - delta) * (1 - tau) * tau**i
            term = 0.75**i * contraction_offset(d, beta0, C1, C2, gamma, eta)
            total += term
            if i > 10 and term > prev:
                total = np.inf
                break
            if i > 5 and term < 1e-10 * max(total, 1.0):
                break
            prev = term
        else:
            total = np.inf
        if total < best:
            best, best_tau = total, tau
    return float(best), best_tau


def bombieri_giusti_check(
    f: NestedFamily,
    beta0: float,
    C1: float,
    C2: float,
    delta: float,
    eta: float,
    gamma: float,
    levels: int = 32,
    s_grid=None,
) -> BombieriGiustiResult:
    """Check both hypotheses on grids (smaller set on the left), then the conclusion.

    The measure is normalised so that ν(U_1) = 1.
    """
    if np.any(f.values <= 0):
        raise ValueError("f must be positive on U_1")
    fam = NestedFamily(f.values, f.weights / f.total, f.depth)
    sig = np.geomspace(delta, 1.0, levels)
    betas = _beta_grid(beta0, eta, 12, 1e-3)
    ib0 = _inv(beta0)
    for i, small in enumerate(sig[:-1]):
        lhs = fam.log_norm(small, beta0)
        for big in sig[i + 1 :]:
            for b in betas:
                log_bound = (1 / b - ib0) * (log(C1) - gamma * log(big - small)) + fam.log_norm(big, b)
                if lhs > log_bound + 1e-12:
                    return BombieriGiustiResult(
                        False, None, exp(lhs), None, {"hypothesis": 1, "sigma": float(small), "sigma_prime": float(big), "beta": float(b)}
                    )
    with np.errstate(divide="ignore"):
        top = float(np.log(fam.values.max()))
    s_grid = np.geomspace(1e-3, max(top, 1e-3) + 1, 200) if s_grid is None else np.asarray(s_grid)
    for s in s_grid:
        if fam.level_measure(s) > C2 / s * (1 + 1e-12):
            return BombieriGiustiResult(False, None, fam.norm(delta, beta0), None, {"hypothesis": 2, "s": float(s)})
    log_M, tau = bombieri_giusti_log_constant(beta0, C1, C2, delta, eta, gamma)
    log_lhs = fam.log_norm(delta, beta0)
    M = exp(log_M) if log_M < 700 else np.inf
    return BombieriGiustiResult(bool(log_lhs <= log_M), M, exp(log_lhs), M, None, tau, log_M)


# -- empirical reverse-Hölder constants ------------------------------------------------


@dataclass(frozen=True)
class EmpiricalRun:
    C_fitted: float
    M: float
    gamma_tilde: float
    sup: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.sup <= self.bound

    def as_dict(self) -> dict:
        return {
            "C_fitted": self.C_fitted,
            "M": self.M,
            "gamma_tilde": self.gamma_tilde,
            "sup": self.sup,
            "bound": self.bound,
            "holds": self.holds,
        }


def fit_reverse_holder_constant(
    f: NestedFamily, gamma1: float, gamma2: float, kappa: float, mu: float, alphas, levels: int = 12, delta: float = 0.5
) -> float:
    """Smallest C making the one-step reverse-Hölder hypothesis hold on the sampled grid."""
    sig = np.linspace(delta, 1.0, levels)
    need = 1.0
    for i, small in enumerate(sig[:-1]):
        for big in sig[i + 1 :]:
            for a in alphas:
                num = f.norm(small, a * kappa)
                den = f.norm(big, a)
                if num == 0:
                    continue
                c = (num / den) ** a * (big - small) ** gamma2 / (1 + mu * a) ** gamma1
                need = max(need, c)
    return float(need)


def empirical_sup_bound(
    f: NestedFamily, p: float = 1.0, gamma1: float = 1.0, gamma2: float = 1.0, kappa: float = 1.5, mu: float = 2.0, delta: float = 0.5
) -> EmpiricalRun:
    """Fit C on the data, feed it to the closed-form constant and compare the resulting
    sup bound on U_δ with the observed supremum."""
    alphas = p * kappa ** np.arange(0, 12)
    C = fit_reverse_holder_constant(f, gamma1, gamma2, kappa, mu, alphas, delta=delta)
    M, gt = moser_constant_unbounded(IterationParams(C, gamma1, gamma2, kappa, p, mu))
    bound = (M / (1 - delta) ** gt) ** (1 / p) * f.norm(1.0 + 1e-12, p)
    return EmpiricalRun(C, M, gt, f.norm(delta, np.inf), float(bound))
