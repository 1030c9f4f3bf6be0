import numpy as np
import pytest

from kinetraj.highorder import (
    ModelSpec,
    NormalizationImpossible,
    NotNormalized,
    building_decompose,
    connect_k,
    homogeneous_dimension,
    inverse_last_column_rate,
    normalize_coordinates,
    wronskian_constant,
    wronskian_constant_exact,
    wronskian_k,
    wronskian_k_closed_form,
)
from kinetraj.trajectory import ConnectionImpossible


def test_normalize_scalar():
    spec = ModelSpec(2, (1, 1), ([[2.0]],))
    a1, a2 = normalize_coordinates(spec)
    assert np.allclose(a1, [[1]]) and np.allclose(a2, [[0.5]])
    assert np.allclose(np.linalg.solve(a1, spec.b_matrices[0]) @ a2, [[1]])


def test_normalize_with_kernel():
    spec = ModelSpec(2, (1, 2), ([[1.0, 1.0]],))
    _, a2 = normalize_coordinates(spec)
    assert np.allclose(a2[:, 0], [0.5, 0.5])
    assert np.allclose(a2[:, 1] / a2[0, 1], [1, -1])
    assert np.allclose(spec.b_matrices[0] @ a2, [[1, 0]])


def test_normalize_fixed_point_and_rank():
    spec = ModelSpec(3, (1, 2, 2))
    assert all(np.allclose(a, np.eye(a.shape[0])) for a in normalize_coordinates(spec))
    with pytest.raises(NormalizationImpossible):
        normalize_coordinates(ModelSpec(2, (2, 2), ([[1, 0], [1, 0]],)))


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(2, (2, 1))
    with pytest.raises(ValueError):
        ModelSpec(2, (1,))
    spec = ModelSpec(2, (1, 2), ([[1.0, 1.0]],))
    assert ModelSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


@pytest.mark.parametrize(
    "k, dims, q",
    [(2, (1, 1), 6), (2, (3, 3), 14), (1, (2,), 4), (3, (1, 1, 1), 11)],
)
def test_homogeneous_dimension(k, dims, q):
    assert homogeneous_dimension(ModelSpec(k, dims)) == q


def test_wronskian_small_cases():
    _, det = wronskian_k(2, 0.5)
    assert det == pytest.approx(0.25, rel=1e-12)
    for r in (0.1, 0.7, 3.0):
        _, det = wronskian_k(3, r)
        assert det == pytest.approx(r**4.5, rel=1e-12)
    with pytest.raises(ValueError):
        wronskian_k(2, 0.0)


def test_wronskian_constants():
    assert [wronskian_constant(k) for k in (2, 3, 4, 5)] == [1, 1, 18, 18]
    assert [wronskian_constant_exact(k) for k in (2, 3, 4, 5)] == [1, 1, 18, 72]


@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_exact_closed_form_matches_brute_force(k):
    for r in np.logspace(-2, 1, 20):
        _, det = wronskian_k(k, r)
        assert det == pytest.approx(float(wronskian_k_closed_form(k, r, exact_odd=True)), rel=1e-10)


def test_block_power():
    _, det = wronskian_k(4, 0.3, d_k=2)
    assert det == pytest.approx(float(wronskian_k_closed_form(4, 0.3, d_k=2)), rel=1e-10)


def test_buildings():
    deco = building_decompose(ModelSpec(2, (1, 2)))
    assert [(b.depth, b.width) for b in deco.buildings] == [(2, 1), (1, 1)] and deco.total == 3
    deco = building_decompose(ModelSpec(3, (1, 2, 2)))
    assert [(b.depth, b.width) for b in deco.buildings] == [(3, 1), (2, 1)] and deco.total == 5
    deco = building_decompose(ModelSpec(3, (2, 2, 2)))
    assert len(deco.buildings) == 1 and deco.buildings[0].width == 2
    assert sorted(deco.relabeling()) == list(range(6))
    with pytest.raises(NotNormalized):
        building_decompose(ModelSpec(2, (1, 1), ([[2.0]],)))


def test_connect_k_example():
    spec = ModelSpec(3, (1, 1, 1))
    traj = connect_k(spec, [0, 0, 0, 0], [1, 0, 0, 1])
    assert traj.endpoint_residual() <= 1e-10
    r = np.logspace(-6, 0, 200)
    assert traj.cascade_residual(r) <= 1e-10
    assert np.isfinite(traj.top_level_rate(r))


@pytest.mark.parametrize(
    "spec",
    [
        ModelSpec(2, (1, 2), ([[1.0, 1.0]],)),
        ModelSpec(3, (1, 2, 2)),
        ModelSpec(3, (2, 2, 3), ([[1, 2], [0, 1]], [[1, 0, 1], [0, 1, 0]])),
        ModelSpec(4, (1, 1, 1, 1)),
    ],
)
def test_connect_k_random(spec):
    rng = np.random.default_rng(spec.total_dim)
    r = np.logspace(-6, 0, 100)
    for _ in range(20):
        p0 = np.concatenate([[rng.uniform(-1, 1)], rng.normal(size=spec.total_dim)])
        p1 = np.concatenate([[p0[0] + rng.uniform(0.2, 3)], rng.normal(size=spec.total_dim)])
        traj = connect_k(spec, p0, p1)
        assert traj.endpoint_residual() <= 1e-9
        assert traj.cascade_residual(r) <= 1e-9


def test_connect_k_rejects():
    spec = ModelSpec(2, (1, 1))
    with pytest.raises(ConnectionImpossible):
        connect_k(spec, [1, 0, 0], [1, 1, 1])
    with pytest.raises(ValueError):
        connect_k(spec, [0, 0], [1, 1, 1])


@pytest.mark.parametrize("k", [2, 3, 4])
def test_last_column_rate_bounded(k):
    assert np.isfinite(inverse_last_column_rate(k, np.logspace(-8, 0, 400)))
