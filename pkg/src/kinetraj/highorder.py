"""Trajectories for cascades of k levels x^1, ..., x^k with x^k the velocity.

The transport field is sum_j (b_j x^{j+1}) . grad_{x^j}, where b_j is a
d_j x d_{j+1} matrix of full rank d_j. After the linear change of variables
from :func:`normalize_coordinates` every b_j is [Id | 0], and the variables
split into independent equal-dimension chains (buildings).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np
from scipy.linalg import null_space

from .trajectory import ConnectionImpossible


class NormalizationImpossible(ValueError):
    """A coupling matrix is rank deficient."""


class NotNormalized(ValueError):
    """The model must be brought to [Id | 0] couplings first."""


@dataclass(frozen=True)
class ModelSpec:
    k: int
    dims: tuple
    b_matrices: tuple = field(default=None)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if self.k < 1 or len(dims) != self.k:
            raise ValueError(f"need k >= 1 and exactly k dims, got k={self.k}, dims={dims}")
        if min(dims) < 1 or any(a > b for a, b in zip(dims, dims[1:])):
            raise ValueError(f"dims must be positive and nondecreasing, got {dims}")
        if self.b_matrices is None:
            bs = tuple(np.eye(dims[j], dims[j + 1]) for j in range(self.k - 1))
        else:
            bs = tuple(np.array(b, dtype=float).reshape(dims[j], dims[j + 1]) for j, b in enumerate(self.b_matrices))
            if len(bs) != self.k - 1:
                raise ValueError(f"need {self.k - 1} coupling matrices, got {len(bs)}")
        for b in bs:
            b.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "b_matrices", bs)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return all(np.allclose(b, np.eye(*b.shape), atol=tol, rtol=0) for b in self.b_matrices)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(int(data["k"]), tuple(data["dims"]), data.get("b_matrices"))

    @classmethod
    def from_json(cls, path) -> "ModelSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"k": self.k, "dims": list(self.dims), "b_matrices": [b.tolist() for b in self.b_matrices]}


def _right_inverse(b: np.ndarray) -> np.ndarray:
    # b^T (b b^T)^{-1}: maps onto the orthogonal complement of ker b
    return np.linalg.solve(b @ b.T, b).T


def _oriented_kernel(b: np.ndarray) -> np.ndarray:
    c = null_space(b)
    for j in range(c.shape[1]):
        lead = c[np.flatnonzero(np.abs(c[:, j]) > 1e-12)[0], j]
        if lead < 0:
            c[:, j] = -c[:, j]
    return c


def normalize_coordinates(spec: ModelSpec) -> list[np.ndarray]:
    """Matrices A_1, ..., A_k with A_j^{-1} b_j A_{j+1} = [Id | 0]."""
    mats = [np.eye(spec.dims[0])]
    for j, b in enumerate(spec.b_matrices):
        if np.linalg.matrix_rank(b) < spec.dims[j]:
            raise NormalizationImpossible(f"coupling matrix b_{j + 1} has rank below {spec.dims[j]}")
        mats.append(np.hstack([_right_inverse(b) @ mats[j], _oriented_kernel(b)]))
    return mats


def homogeneous_dimension(spec: ModelSpec) -> int:
    k = spec.k
    return 2 + sum(d * (1 + 2 * (k - j)) for j, d in enumerate(spec.dims, start=1))


# -- trigonometric forcing family -------------------------------------------


@dataclass(frozen=True)
class LogTrig:
    """r^power * (sum_j a_j cos(j s) + b_j sin(j s)) with s = log r, j = 0..ell."""

    power: float
    cos: np.ndarray
    sin: np.ndarray

    def derivative(self) -> "LogTrig":
        j = np.arange(self.cos.size)
        # d/dr r^a T(log r) = r^{a-1} (a T + T')
        return LogTrig(self.power - 1, self.power * self.cos + j * self.sin, self.power * self.sin - j * self.cos)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        s = np.log(r)[..., None]
        j = np.arange(self.cos.size)
        trig = np.cos(j * s) @ self.cos + np.sin(j * s) @ self.sin
        return r**self.power * trig


def trig_family(k: int) -> list[LogTrig]:
    """The k forcings r^{k-1/2} g(log r).

    g runs over cos(j s), sin(j s) for j = 1..l (l = floor(k/2)), preceded by
    the constant 1 when k is odd. Columns are interleaved as cos(js), sin(js),
    an ordering for which the Wronskian determinant is positive.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ell = k // 2
    power = k - 0.5
    fam = []

    def basis(j: int, use_sin: bool) -> LogTrig:
        c, s = np.zeros(ell + 1), np.zeros(ell + 1)
        (s if use_sin else c)[j] = 1.0
        return LogTrig(power, c, s)

    if k % 2 == 1:
        fam.append(basis(0, False))
    for j in range(1, ell + 1):
        fam.append(basis(j, False))
        fam.append(basis(j, True))
    return fam


def derivative_table(k: int, orders: int | None = None) -> list[list[LogTrig]]:
    """table[i][m] is the i-th derivative of the m-th forcing, i = 0..orders-1."""
    orders = k if orders is None else orders
    rows = [trig_family(k)]
    for _ in range(1, orders):
        rows.append([g.derivative() for g in rows[-1]])
    return rows


def wronskian_constant(k: int) -> float:
    """(1! 3! ... (2l-1)!)^2 / l! with l = floor(k/2), the constant quoted for every k."""
    ell = k // 2
    prod = 1
    for i in range(1, ell + 1):
        prod *= factorial(2 * i - 1)
    return prod**2 / factorial(ell)


def wronskian_constant_exact(k: int) -> float:
    """Determinant of the s-Wronskian of the trig family.

    For odd k the expansion along the constant column leaves the Wronskian of
    the derivatives -j sin(js), j cos(js), which carries an extra (l!)^2.
    """
    ell = k // 2
    return wronskian_constant(k) * (factorial(ell) ** 2 if k % 2 else 1)


def wronskian_k_matrix(k: int, r) -> np.ndarray:
    table = derivative_table(k)
    return np.stack([np.stack([g(r) for g in row], -1) for row in table], -2)


def wronskian_k(k: int, r: float, d_k: int = 1) -> tuple[np.ndarray, float]:
    """k x k Wronskian of the trig family and the determinant of its d_k-block expansion."""
    if not r > 0:
        raise ValueError("r must be positive")
    w = wronskian_k_matrix(k, r)
    return w, float(np.linalg.det(w)) ** d_k


def wronskian_k_closed_form(k: int, r, d_k: int = 1, exact_odd: bool = False):
    const = wronskian_constant_exact(k) if exact_odd else wronskian_constant(k)
    return (np.asarray(r, dtype=float) ** (k * k / 2) * const) ** d_k


# -- buildings ----------------------------------------------------------------


@dataclass(frozen=True)
class Building:
    start_level: int  # 1-based level where the chain starts
    depth: int
    width: int
    components: tuple  # 0-based component indices shared by every level of the chain

    def variables(self, offsets: tuple) -> list[list[int]]:
        """Flat state indices, one list per level of the chain."""
        return [[offsets[lvl - 1] + c for c in self.components] for lvl in range(self.start_level, self.start_level + self.depth)]


@dataclass(frozen=True)
class BuildingDecomposition:
    buildings: tuple
    offsets: tuple
    total: int

    def relabeling(self) -> list[int]:
        """Flat state indices ordered building by building, level by level."""
        order = []
        for b in self.buildings:
            for level in b.variables(self.offsets):
                order.extend(level)
        return order


def building_decompose(spec: ModelSpec) -> BuildingDecomposition:
    if not spec.is_normalized():
        raise NotNormalized("apply normalize_coordinates before decomposing into buildings")
    dims = (0,) + spec.dims
    k = spec.k
    offsets = tuple(int(o) for o in np.cumsum((0,) + spec.dims[:-1]))
    out = []
    for j in range(1, k + 1):
        width = dims[j] - dims[j - 1]
        if width > 0:
            out.append(Building(j, k - j + 1, width, tuple(range(dims[j - 1], dims[j]))))
    total = sum(b.depth * b.width for b in out)
    assert total == spec.total_dim
    return BuildingDecomposition(tuple(out), offsets, total)


# -- connection ----------------------------------------------------------------


def _shift_exp(k: int, a) -> np.ndarray:
    """exp(a N) for the k x k upper shift N: entries a^{l-j}/(l-j)!."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape + (k, k))
    for j in range(k):
        for l in range(j, k):
            out[..., j, l] = a ** (l - j) / factorial(l - j)
    return out


@dataclass(frozen=True)
class ChainTrajectory:
    """Equal-dimension chain of depth k; levels are rows of x0, x1 (shape (k, n))."""

    t0: float
    delta: float
    x0: np.ndarray
    x1: np.ndarray
    params: np.ndarray  # (k, n)

    @property
    def depth(self) -> int:
        return self.x0.shape[0]

    def states(self, r, derivative: int = 0) -> np.ndarray:
        """Level values (or their r-derivatives) at r; shape r.shape + (k, n)."""
        r = np.asarray(r, dtype=float)
        k, delta = self.depth, self.delta
        table = derivative_table(k, k + derivative)
        scale = delta ** (k - 1 - np.arange(k))
        forced = np.zeros(r.shape + self.x0.shape)
        safe = np.where(r > 0, r, 1.0)
        for j in range(k):
            row = table[j + derivative]
            vals = np.stack([g(safe) for g in row], -1)
            if derivative == 0:
                vals = np.where((r > 0)[..., None], vals, 0.0)
            forced[..., j, :] = scale[j] * vals @ self.params
        # free flight: exp(δ r N) x0 differentiated `derivative` times in r
        free = np.zeros_like(forced)
        for j in range(k):
            for l in range(j + derivative, k):
                p = l - j - derivative
                coef = delta ** (l - j) * r**p / factorial(p)
                free[..., j, :] += coef[..., None] * self.x0[l]
        return forced + free


def connect_chain(t0: float, x0: np.ndarray, t1: float, x1: np.ndarray) -> ChainTrajectory:
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    delta = t1 - t0
    if delta == 0:
        raise ConnectionImpossible("t0 == t1")
    k = x0.shape[0]
    w1 = wronskian_k_matrix(k, 1.0)
    if abs(np.linalg.det(w1)) < 1e-14:
        raise ConnectionImpossible("W(1) is singular")
    rhs = x1 - _shift_exp(k, delta) @ x0
    rhs = rhs / (delta ** (k - 1 - np.arange(k)))[:, None]
    params = np.linalg.solve(w1, rhs)
    return ChainTrajectory(float(t0), float(delta), x0, x1, params)


@dataclass(frozen=True)
class TrajectoryK:
    """Trajectory of a general cascade, assembled from its buildings."""

    spec: ModelSpec
    p0: np.ndarray
    p1: np.ndarray
    transforms: tuple
    decomposition: BuildingDecomposition
    chains: tuple

    @property
    def delta(self) -> float:
        return float(self.p1[0] - self.p0[0])

    def levels(self, r, derivative: int = 0) -> list[np.ndarray]:
        """Original-coordinate levels x^1..x^k at r (each of shape r.shape + (d_j,))."""
        r = np.asarray(r, dtype=float)
        y = np.zeros(r.shape + (self.spec.total_dim,))
        off = self.decomposition.offsets
        for b, chain in zip(self.decomposition.buildings, self.chains):
            vals = chain.states(r, derivative)
            for level, idx in enumerate(b.variables(off)):
                y[..., idx] = vals[..., level, :]
        out, pos = [], 0
        for j, d in enumerate(self.spec.dims):
            out.append(y[..., pos : pos + d] @ self.transforms[j].T)
            pos += d
        return out

    def time(self, r):
        return self.p0[0] + np.asarray(r, dtype=float) * self.delta

    def cascade_residual(self, r) -> float:
        """max_j |d/dr x^j - (dt/dr) b_j x^{j+1}| over sampled r > 0."""
        x = self.levels(r)
        dx = self.levels(r, derivative=1)
        worst = 0.0
        for j, b in enumerate(self.spec.b_matrices):
            res = dx[j] - self.delta * x[j + 1] @ b.T
            worst = max(worst, float(np.max(np.abs(res))))
        return worst

    def endpoint_residual(self) -> float:
        lv = self.levels(np.array([0.0, 1.0]))
        flat = np.concatenate(lv, axis=-1)
        return float(max(np.max(np.abs(flat[0] - self.p0[1:])), np.max(np.abs(flat[1] - self.p1[1:]))))

    def top_level_rate(self, r) -> float:
        """sup of r^{1/2} |d/dr x^k| over the sampled r."""
        r = np.asarray(r, dtype=float)
        dv = self.levels(r, derivative=1)[-1]
        return float(np.max(np.sqrt(r) * np.linalg.norm(dv, axis=-1)))


def connect_k(spec: ModelSpec, p0, p1) -> TrajectoryK:
    """Join p0 = (t0, x^1..x^k) to p1 within the cascade described by ``spec``."""
    p0 = np.asarray(p0, dtype=float).ravel()
    p1 = np.asarray(p1, dtype=float).ravel()
    if p0.size != 1 + spec.total_dim or p1.size != p0.size:
        raise ValueError(f"points must have 1 + {spec.total_dim} entries")
    if p1[0] == p0[0]:
        raise ConnectionImpossible("t0 == t1")
    mats = normalize_coordinates(spec)
    normalized = ModelSpec(spec.k, spec.dims)
    deco = building_decompose(normalized)

    def to_y(flat):
        parts, pos = [], 0
        for j, d in enumerate(spec.dims):
            parts.append(np.linalg.solve(mats[j], flat[pos : pos + d]))
            pos += d
        return np.concatenate(parts)

    y0, y1 = to_y(p0[1:]), to_y(p1[1:])
    chains = []
    for b in deco.buildings:
        idx = b.variables(deco.offsets)
        chains.append(connect_chain(p0[0], y0[idx], p1[0], y1[idx]))
    return TrajectoryK(spec, p0, p1, tuple(mats), deco, tuple(chains))


def inverse_last_column_rate(k: int, r) -> float:
    """sup over sampled r of r^{1/2} max_i |(W(r)^{-1} ... )_{i;k}| for the depth-k trig family.

    Uses A(r)^{-1} = W(1) W(r)^{-1} with unit time step.
    """
    r = np.asarray(r, dtype=float)
    w = wronskian_k_matrix(k, r)
    inv = wronskian_k_matrix(k, 1.0) @ np.linalg.inv(w)
    return float(np.max(np.sqrt(r) * np.max(np.abs(inv[..., :, -1]), axis=-1)))
