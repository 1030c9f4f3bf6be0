"""Does a forcing pair g1 = r^{3/2}, g2 = power series ever reproduce the critical scaling?

The symbolic path works on finite power expansions term by term; the numeric
path fits log-log slopes and accepts any forcing family.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .trajectory import CRITICAL, ForcingPair, criticality_profile, inverse_column_profile, wronskian_array

BASE_EXPONENT = 1.5
COEFF_TOL = 1e-12
FIT_RANGE = (np.exp(-24.0), np.exp(-2.3))
EXPONENT_TOL = 0.02


class PowerExpansionRequired(TypeError):
    """The symbolic auditor only handles finite power expansions."""


class NoTrajectoryFamily(ValueError):
    """W(1) is singular, so the forcing pair cannot connect arbitrary endpoints."""


@dataclass(frozen=True)
class PowerExpansion:
    """g2(r) = Σ b_k r^{e_k} + O(r^L), leading exponent 3/2 (its coefficient may be 0)."""

    terms: tuple
    remainder: float = np.inf

    def __post_init__(self):
        terms = tuple((float(b), float(e)) for b, e in self.terms)
        if not terms:
            raise ValueError("a power expansion needs at least one term")
        exps = [e for _, e in terms]
        if exps[0] != BASE_EXPONENT:
            raise ValueError(f"first exponent must be {BASE_EXPONENT}, got {exps[0]}")
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise ValueError("exponents must be strictly increasing")
        if self.remainder <= exps[-1]:
            raise ValueError("remainder order must exceed the last exponent")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_dict(cls, data: dict) -> "PowerExpansion":
        return cls(tuple(tuple(t) for t in data["terms"]), float(data.get("remainder", np.inf)))

    def value(self, r: float = 1.0) -> float:
        return float(sum(b * r**e for b, e in self.terms))

    def slope(self, r: float = 1.0) -> float:
        return float(sum(b * e * r ** (e - 1) for b, e in self.terms))

    def forcing(self) -> ForcingPair:
        return ForcingPair.power([(1.0, BASE_EXPONENT)], self.terms)


@dataclass
class AuditReport:
    det_leading_exponent: float | None
    inverse_column_leading_exponent: float | None
    invertibility_at_one: bool
    critical: bool
    obstruction: list = field(default_factory=list)
    path: str = "symbolic"

    def as_dict(self) -> dict:
        return {
            "path": self.path,
            "det_leading_exponent": self.det_leading_exponent,
            "inverse_column_leading_exponent": self.inverse_column_leading_exponent,
            "invertibility_at_one": self.invertibility_at_one,
            "critical": self.critical,
            "obstruction": list(self.obstruction),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _leading(poly: dict) -> tuple[float, float] | None:
    """(exponent, coefficient) of the lowest-order nonzero term."""
    for e in sorted(poly):
        if abs(poly[e]) > COEFF_TOL:
            return e, poly[e]
    return None


def audit_forcing_pair(g2, g1=None) -> AuditReport:
    """Symbolic audit of (r^{3/2}, g2).

    det W = g1 g2' - g2 g1' = Σ (e_k - 3/2) b_k r^{e_k + 1/2}. The second column
    of A(r)^{-1} is W(1) (-g2(r), g1(r))^T / det W(r) up to the δ-scaling of
    its first entry; each row is collected as a power sum.
    """
    if g1 is not None:
        raise PowerExpansionRequired("only g1 = r^{3/2} is audited")
    if not isinstance(g2, PowerExpansion):
        raise PowerExpansionRequired(f"expected a PowerExpansion, got {type(g2).__name__}; use audit_numeric")
    trace = []
    det1 = g2.slope(1.0) - BASE_EXPONENT * g2.value(1.0)
    trace.append(f"det W(1) = g2'(1) - (3/2) g2(1) = {det1:.6g}")
    if abs(det1) <= COEFF_TOL:
        raise NoTrajectoryFamily("g2'(1) = (3/2) g2(1): W(1) is singular")

    det = {e + 0.5: (e - BASE_EXPONENT) * b for b, e in g2.terms}
    lead = _leading(det)
    if lead is None:
        raise NoTrajectoryFamily("det W vanishes identically: g2 is a multiple of g1")
    det_exp, det_coef = lead
    trace.append(f"det W(r) = {det_coef:.6g} r^{det_exp:g} + higher order (the r^2 term cancels)")
    if det_exp >= g2.remainder + 0.5:
        trace.append("leading det exponent lies inside the remainder; result is not determined")

    b0 = dict((e, b) for b, e in g2.terms).get(BASE_EXPONENT, 0.0)
    g2_1, g2p_1 = g2.value(1.0), g2.slope(1.0)
    rows = []
    # row 1: g2(1) g1(r) - g1(1) g2(r); row 2: g2'(1) g1(r) - g1'(1) g2(r)
    for name, c_g1, c_g2 in (("first", g2_1, 1.0), ("second", g2p_1, BASE_EXPONENT)):
        poly = defaultdict(float)
        poly[BASE_EXPONENT] += c_g1
        for b, e in g2.terms:
            poly[e] -= c_g2 * b
        coef15 = poly[BASE_EXPONENT]
        trace.append(f"{name} row: coefficient of r^(3/2) = {coef15:.6g}")
        rows.append(_leading(dict(poly)))
    cancel1 = abs(g2_1 - b0) <= COEFF_TOL
    cancel2 = abs(g2p_1 - BASE_EXPONENT * b0) <= COEFF_TOL
    trace.append(
        "cancelling r^(3/2) in both rows needs b0 = g2(1) and b0 = (2/3) g2'(1), "
        "i.e. g2'(1) = (3/2) g2(1), which makes W(1) singular"
    )
    if cancel1 and cancel2:  # pragma: no cover - excluded by the det W(1) check above
        trace.append("both cancellations hold")
    nums = [r for r in rows if r is not None]
    col_exp = min(e for e, _ in nums) - det_exp
    trace.append(f"inverse column ~ r^{col_exp:g}")
    critical = abs(col_exp + 0.5) <= 1e-12 and abs(det_exp - 2.0) <= 1e-12
    trace.append("critical" if critical else "non-critical: the column blows up faster than r^{-1/2} or det W misses r^2")
    return AuditReport(float(det_exp), float(col_exp), True, bool(critical), trace, "symbolic")


def audit_numeric(family: ForcingPair, delta: float = 1.0, samples: int = 2000) -> AuditReport:
    """Log-log fits of det W(r) and of the second column of A(r)^{-1}.

    Non-periodic families use a least-squares fit weighted toward small r;
    the log-oscillating family uses period averages.
    """
    w1 = wronskian_array(family, 1.0)
    det1 = float(w1[0, 0] * w1[1, 1] - w1[0, 1] * w1[1, 0])
    if abs(det1) <= COEFF_TOL:
        return AuditReport(None, None, False, False, ["W(1) singular"], "numeric")
    rep = criticality_profile(delta, 1, family, samples=samples, fit_range=FIT_RANGE)
    det_exp, col_exp = rep.det_exponent_fit, rep.inverse_column_exponent
    if family.tag != CRITICAL:
        r = np.exp(np.linspace(np.log(FIT_RANGE[0]), np.log(FIT_RANGE[1]), samples))
        w = wronskian_array(family, r)
        det = w[..., 0, 0] * w[..., 1, 1] - w[..., 0, 1] * w[..., 1, 0]
        det_exp = _weighted_slope(r, det)
        col_exp = _weighted_slope(r, inverse_column_profile(delta, r, family))
    critical = abs(col_exp + 0.5) <= EXPONENT_TOL and np.isfinite(rep.inverse_column_sup) and rep.inverse_column_sup <= rep.cap
    trace = [
        f"fit range r in [{FIT_RANGE[0]:.3g}, {FIT_RANGE[1]:.3g}]",
        f"det exponent {det_exp:.4f}, inverse column exponent {col_exp:.4f}",
        f"sup r^(1/2)|column| = {rep.inverse_column_sup:.4g} (cap {rep.cap:g})",
    ]
    return AuditReport(float(det_exp), float(col_exp), True, bool(critical), trace, "numeric")


def _weighted_slope(r, y, trim: float = 0.02) -> float:
    """Weighted least-squares slope of log|y| on log r; weights decay toward large r and
    a fraction ``trim`` is dropped at each end."""
    lr, ly = np.log(r), np.log(np.abs(y))
    k = int(trim * lr.size)
    lr, ly = lr[k : lr.size - k], ly[k : ly.size - k]
    w = np.exp(-4.0 * (lr - lr[0]))
    slope, _ = np.polyfit(lr, ly, 1, w=np.sqrt(w))
    return float(slope)


def random_expansion(rng: np.random.Generator, max_terms: int = 4) -> PowerExpansion:
    """Random expansion with a nonsingular W(1), exponent gaps >= 0.25 and |b_k| >= 0.5 beyond b0."""
    while True:
        count = int(rng.integers(1, max_terms + 1))
        exps = [BASE_EXPONENT]
        for _ in range(count):
            exps.append(exps[-1] + float(rng.uniform(0.25, 1.0)))
        coefs = [float(rng.uniform(-2, 2))]
        coefs += [float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0)) for _ in range(count)]
        g = PowerExpansion(tuple(zip(coefs, exps)))
        if abs(g.slope(1.0) - BASE_EXPONENT * g.value(1.0)) > 0.1:
            return g


def audit_corpus(count: int = 500, seed: int = 0) -> dict:
    """Run both paths over random expansions; count criticals and exponent disagreements."""
    rng = np.random.default_rng(seed)
    critical = 0
    worst_det = worst_col = 0.0
    for _ in range(count):
        g = random_expansion(rng)
        sym = audit_forcing_pair(g)
        num = audit_numeric(g.forcing(), samples=600)
        critical += sym.critical + num.critical
        worst_det = max(worst_det, abs(sym.det_leading_exponent - num.det_leading_exponent))
        worst_col = max(worst_col, abs(sym.inverse_column_leading_exponent - num.inverse_column_leading_exponent))
    return {"count": count, "critical": int(critical), "max_det_gap": worst_det, "max_column_gap": worst_col}
