import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetraj.geometry import PhasePoint
from kinetraj.trajectory import (
    CRITICAL_PAIR,
    BlockMatrix,
    ConnectionImpossible,
    ForcingPair,
    connect,
    criticality_profile,
    det_B_threshold,
    endpoint_residual,
    eval_states,
    eval_trajectory,
    forcing_eval,
    galilean_matrix,
    inverse_A_array,
    kinetic_residual,
    matrices_AB,
    property4_ratios,
    scaling_matrix,
    trajectory_csv,
    wronskian,
    wronskian_array,
    wronskian_inverse,
)


def random_pair(rng, n=1):
    t0 = rng.uniform(-2, 2)
    dt = rng.choice([-1, 1]) * rng.uniform(0.1, 10)
    p0 = PhasePoint(t0, rng.normal(size=n), rng.normal(size=n))
    p1 = PhasePoint(t0 + dt, rng.normal(size=n), rng.normal(size=n))
    return p0, p1


def test_forcing_values_at_one():
    g1, d1, dd1, g2, d2, dd2 = forcing_eval(CRITICAL_PAIR, 1.0)
    assert (g1, g2) == pytest.approx((1.0, 0.0))
    assert (d1, d2) == pytest.approx((1.5, 1.0))
    assert (dd1, dd2) == pytest.approx((-0.25, 2.0))


def test_forcing_rejects_nonpositive_r():
    with pytest.raises(ValueError):
        forcing_eval(CRITICAL_PAIR, 0.0)


def test_forcing_derivatives_match_finite_differences():
    r, h = np.array([0.03, 0.4, 0.9]), 1e-6
    (g1, d1, dd1), (g2, d2, dd2) = CRITICAL_PAIR(r)
    (g1p, d1p, _), (g2p, d2p, _) = CRITICAL_PAIR(r + h)
    (g1m, d1m, _), (g2m, d2m, _) = CRITICAL_PAIR(r - h)
    assert np.allclose((g1p - g1m) / (2 * h), d1, rtol=1e-7)
    assert np.allclose((d2p - d2m) / (2 * h), dd2, rtol=1e-6)


def test_families_vanish_at_zero():
    assert CRITICAL_PAIR.vanishes_at_zero()
    assert ForcingPair.action_minimizer().vanishes_at_zero()


def test_wronskian_examples():
    assert wronskian(CRITICAL_PAIR, 0.5).det() == pytest.approx(0.25, rel=1e-12)
    assert np.allclose(wronskian(CRITICAL_PAIR, 1.0).entries, [[1, 0], [1.5, 1]])
    assert wronskian(CRITICAL_PAIR, 1e-6, n=2).det() == pytest.approx(1e-24, rel=1e-9)


def test_block_det_matches_full_det():
    w = wronskian(CRITICAL_PAIR, 0.37, n=3)
    assert np.linalg.det(w.expand()) == pytest.approx(w.det(), rel=1e-12)


def test_wronskian_inverse_closed_form():
    assert np.allclose(wronskian_inverse(1.0).entries, [[1, 0], [-1.5, 1]])
    w = wronskian(CRITICAL_PAIR, 0.7)
    assert np.allclose((w @ wronskian_inverse(0.7)).entries, np.eye(2), atol=1e-12)
    r = np.exp(np.pi / 2)
    assert wronskian_inverse(r).entries[0, 1] == pytest.approx(-np.exp(-np.pi / 4), rel=1e-12)


def test_scaling_and_galilean():
    assert np.allclose(galilean_matrix(1.3, 0.0).entries, np.eye(2))
    assert np.allclose((galilean_matrix(1, 2) @ galilean_matrix(1, 3)).entries, galilean_matrix(1, 5).entries)
    x, v = scaling_matrix(2).apply([1.0], [1.0])
    assert (x[0], v[0]) == (2.0, 1.0)
    with pytest.raises(ValueError):
        scaling_matrix(0)


def test_block_matrix_validation():
    with pytest.raises(ValueError):
        BlockMatrix(np.eye(3))


def test_connect_rest_state():
    traj = connect(PhasePoint(0, [0], [0]), PhasePoint(1, [0], [0]))
    assert np.allclose(traj.m1, 0) and np.allclose(traj.m2, 0)
    s = eval_states(traj, np.linspace(0, 1, 11))
    assert np.allclose(s["t"], np.linspace(0, 1, 11)) and np.allclose(s["x"], 0)


def test_connect_velocity_jump():
    traj = connect(PhasePoint(0, [0], [0]), PhasePoint(1, [0], [1]))
    assert traj.m1 == pytest.approx([0.0], abs=1e-15) and traj.m2 == pytest.approx([1.0])
    r = np.array([0.01, 0.3, 0.8])
    L = np.log(r)
    s = eval_states(traj, r)
    assert np.allclose(s["v"][:, 0], np.sqrt(r) * (1.5 * np.sin(L) + np.cos(L)))
    assert np.allclose(s["x"][:, 0], r**1.5 * np.sin(L))
    assert np.allclose(s["dx"][:, 0], s["v"][:, 0])


def test_connect_equal_times():
    with pytest.raises(ConnectionImpossible):
        connect(PhasePoint(0, [0], [0]), PhasePoint(0, [1], [0]))


def test_eval_trajectory_endpoints_and_tangent():
    p0, p1 = PhasePoint(0, [1], [2]), PhasePoint(2, [-1], [0.5])
    traj = connect(p0, p1)
    assert eval_trajectory(traj, 0.0) == p0
    assert eval_trajectory(traj, 1.0) == p1
    with pytest.raises(ValueError):
        eval_trajectory(traj, 0.0, tangent=True)
    with pytest.raises(ValueError):
        eval_trajectory(traj, 1.5)
    _, (dt, dv) = eval_trajectory(traj, 0.5, tangent=True)
    assert dt == 2.0 and dv.shape == (1,)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_random_connections(n):
    rng = np.random.default_rng(n)
    r = np.logspace(-8, 0, 1000)
    for _ in range(100):
        traj = connect(*random_pair(rng, n))
        assert endpoint_residual(traj) <= 1e-10
        assert kinetic_residual(traj, r) <= 1e-10
        sup = np.max(np.sqrt(r) * np.linalg.norm(eval_states(traj, r)["dv"], axis=-1))
        assert np.isfinite(sup)


def test_property4_single_constant():
    rng = np.random.default_rng(5)
    r = np.logspace(-8, 0, 200)
    worst = max(property4_ratios(connect(*random_pair(rng, 2)), r).max() for _ in range(1000))
    assert np.isfinite(worst) and worst < 10


def test_matrices_endpoints():
    a0, b0 = matrices_AB(2.5, 0.0)
    a1, b1 = matrices_AB(2.5, 1.0)
    assert np.allclose(a0.entries, 0) and np.allclose(b0.entries, np.eye(2))
    assert np.allclose(a1.entries, np.eye(2)) and np.allclose(b1.entries, 0, atol=1e-14)
    with pytest.raises(ValueError):
        matrices_AB(0.0, 0.5)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("delta", [-3.0, 0.5, 7.0])
def test_det_A_law(n, delta):
    for r in np.arange(0.1, 1.0, 0.1):
        a, _ = matrices_AB(delta, r, n=n)
        assert a.det() == pytest.approx(r ** (2 * n), rel=1e-12)


def test_inverse_consistency():
    r = np.logspace(-6, 0, 50)
    for delta in (-2.0, 0.3, 4.0):
        inv = inverse_A_array(delta, r)
        D = np.diag([delta, 1.0])
        w1 = wronskian_array(CRITICAL_PAIR, 1.0)
        direct = D @ w1 @ np.linalg.inv(wronskian_array(CRITICAL_PAIR, r)) @ np.linalg.inv(D)
        assert np.allclose(inv, direct, rtol=1e-12, atol=1e-12 * np.abs(direct).max())


def test_criticality_reports():
    rep = criticality_profile(1.0)
    assert rep.critical and rep.det_exponent_fit == pytest.approx(2.0, abs=0.02)
    far = criticality_profile(10.0)
    assert far.critical and far.cap == pytest.approx(100 * 11)
    # the sup grows at most linearly in |delta|
    assert far.inverse_column_sup / 11 <= rep.inverse_column_sup
    action = criticality_profile(1.0, forcing=ForcingPair.action_minimizer())
    assert not action.critical


def test_det_B_threshold_recorded():
    r0 = det_B_threshold(1.0)
    assert 0 < r0 <= 1


def test_trajectory_csv_shape():
    text = trajectory_csv(connect(PhasePoint(0, [0], [0]), PhasePoint(1, [0], [1])), 200)
    lines = text.strip().splitlines()
    assert lines[0] == "r,t,x0,v0,dv0" and len(lines) == 201


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20), st.floats(-5, 5), st.floats(-5, 5))
def test_endpoint_property(dt, x1, v1):
    traj = connect(PhasePoint(0, [0.3], [-0.2]), PhasePoint(dt, [x1], [v1]))
    assert endpoint_residual(traj) <= 1e-10 * (1 + abs(x1) + abs(v1))
