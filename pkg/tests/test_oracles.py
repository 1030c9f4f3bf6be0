import numpy as np
import pytest

from kinetraj.geometry import PhasePoint
from kinetraj.oracles import (
    EllipticityPair,
    action_minimizer,
    fundamental_exponent,
    fundamental_mass,
    fundamental_solution,
    log_fundamental_solution,
    minimal_action,
    moser_counterexample,
    moser_derivatives,
    moser_log_ratio,
    moser_lower_bound,
    sharpness_threshold,
    truncated_fundamental,
    weak_harnack_integral,
)


def test_fundamental_value():
    assert float(fundamental_solution(1.0, 0.0, 0.0)) == pytest.approx(np.sqrt(3) / (2 * np.pi), rel=1e-14)


def test_fundamental_rejects_past():
    with pytest.raises(ValueError):
        fundamental_solution(0.0, 0.0, 0.0)


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_mass_is_one(t):
    assert fundamental_mass(t) == pytest.approx(1.0, abs=1e-10)


def test_pde_residual_second_order():
    t, x, v = 0.8, 0.2, -0.3
    errs = []
    for h in (1e-2, 5e-3):
        dt = (fundamental_solution(t + h, x, v) - fundamental_solution(t - h, x, v)) / (2 * h)
        dx = (fundamental_solution(t, x + h, v) - fundamental_solution(t, x - h, v)) / (2 * h)
        dvv = (fundamental_solution(t, x, v + h) - 2 * fundamental_solution(t, x, v) + fundamental_solution(t, x, v - h)) / h**2
        errs.append(abs(float(dt + v * dx - dvv)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_diffusion_rescaling_solves_scaled_equation():
    a, t, x, v, h = 2.5, 0.7, 0.1, 0.4, 1e-4

    def f(t, x, v):
        return float(fundamental_solution(t, x, v, diffusion=a))

    dt = (f(t + h, x, v) - f(t - h, x, v)) / (2 * h)
    dx = (f(t, x + h, v) - f(t, x - h, v)) / (2 * h)
    dvv = (f(t, x, v + h) - 2 * f(t, x, v) + f(t, x, v - h)) / h**2
    assert abs(dt + v * dx - a * dvv) <= 1e-5 * abs(dt)


def test_log_exponent_is_scaled_action():
    rng = np.random.default_rng(0)
    origin = PhasePoint.origin(2)
    for _ in range(200):
        t = rng.uniform(0.1, 5)
        x, v = rng.normal(size=2), rng.normal(size=2)
        e = float(fundamental_exponent(t, x, v))
        act = minimal_action(origin, PhasePoint(t, x, v))
        assert e == pytest.approx(-act / (4 * t), rel=1e-12)


def test_truncation():
    assert float(truncated_fundamental(4, 0.5, 0.1, 0.2)) == float(fundamental_solution(0.5, 0.1, 0.2))
    assert float(truncated_fundamental(4, 0.0, 0.1, 0.2)) == float(fundamental_solution(0.25, 0.1, 0.2))
    with pytest.raises(ValueError):
        truncated_fundamental(0, 1.0, 0, 0)


def test_weak_harnack_integral_cases():
    assert weak_harnack_integral(1.5, 1e3) == pytest.approx(np.log(1e3))
    assert weak_harnack_integral(1.0, 10.0) == pytest.approx(0.9)
    assert sharpness_threshold(1) == 1.5 and sharpness_threshold(2) == 1.25
    with pytest.raises(ValueError):
        weak_harnack_integral(1.0, 0.5)


def test_moser_log_ratio():
    assert moser_log_ratio(EllipticityPair(1, 1)) == pytest.approx(1.25, abs=1e-14)
    for lam, Lam in ((0.2, 5.0), (0.5, 0.5), (0.1, 3.0)):
        pair = EllipticityPair(lam, Lam)
        assert moser_log_ratio(pair) == pytest.approx(Lam + 1 / (4 * lam), rel=1e-14)


def test_moser_pde_identity():
    rng = np.random.default_rng(1)
    pair = EllipticityPair(0.3, 4.0)
    t = rng.uniform(0, 2, 500)
    v = np.stack([rng.uniform(-2, 2, 500), rng.uniform(-1.5, 1.5, 500)], -1)
    f, ft, f11, f22 = moser_derivatives(pair, t, v)
    assert np.max(np.abs(ft - pair.lam * f11 - pair.Lam * f22) / f) <= 1e-12
    assert np.all(moser_counterexample(pair, t, v) > 0)
    with pytest.raises(ValueError):
        moser_counterexample(pair, 0.0, np.array([0.0, 2.0]))


def test_moser_lower_bound():
    assert moser_lower_bound(EllipticityPair(0.2, 5.0)) == pytest.approx(2.5)


def test_ellipticity_pair():
    with pytest.raises(ValueError):
        EllipticityPair(0, 1)
    with pytest.raises(ValueError):
        EllipticityPair(2, 1)
    pair = EllipticityPair.isotropic_for_mu(5.0)
    assert pair.mu == pytest.approx(5.0)
    assert EllipticityPair.isotropic_for_mu(2.0).lam == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EllipticityPair.isotropic_for_mu(1.0)


def test_action_examples():
    assert minimal_action(PhasePoint(0, [0], [0]), PhasePoint(1, [0], [0])) == 0
    m = action_minimizer(PhasePoint(0, [0], [0]), PhasePoint(1, [0], [1]))
    assert m.action == pytest.approx(4.0)
    assert m.numeric_action() == pytest.approx(4.0, rel=1e-12)



def test_log_form_survives_underflow():
    lg = float(log_fundamental_solution(1e-3, 1.0, 0.0))
    assert np.isfinite(lg) and lg < -1e8
    assert float(fundamental_solution(1e-3, 1.0, 0.0)) == 0.0
