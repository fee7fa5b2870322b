import itertools

import numpy as np
import pytest

from pfnav.basis import RbfBasis
from pfnav.dynamics import (
    Box,
    VectorField,
    constant_field,
    example2_fields,
    generate_snapshots,
    grid_sampling,
    random_sampling,
)
from pfnav.operator import (
    NsdmdOptions,
    edmd,
    learn_generators,
    nsdmd,
    nsdmd_from_matrices,
    project_row_simplex,
)


def brute_force_simplex_projection(v):
    """KKT support enumeration oracle for small vectors."""
    n = len(v)
    best = None
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            lam = (1.0 - sum(v[i] for i in support)) / size
            z = np.zeros(n)
            ok = True
            for i in range(n):
                if i in support:
                    z[i] = v[i] + lam
                    ok &= z[i] >= -1e-12
                else:
                    ok &= v[i] + lam <= 1e-12
            if ok:
                dist = float(((z - v) ** 2).sum())
                if best is None or dist < best[0]:
                    best = (dist, z)
    return best[1]


# ------------------------------------------------------------ simplex proj


def test_simplex_projection_idempotent():
    v = np.array([0.2, 0.5, 0.3])
    assert np.allclose(project_row_simplex(v), v, atol=1e-15)


def test_simplex_projection_symmetry():
    assert np.allclose(project_row_simplex(np.zeros(3)), np.ones(3) / 3.0)


def test_simplex_projection_reference_value():
    out = project_row_simplex(np.array([1.2, 0.3, -0.1]))
    assert np.allclose(out, [0.95, 0.05, 0.0], atol=1e-12)


def test_simplex_projection_matches_bruteforce():
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = rng.uniform(-2, 2, size=rng.integers(2, 5))
        expect = brute_force_simplex_projection(v)
        got = project_row_simplex(v)
        assert np.allclose(got, expect, atol=1e-10)
        assert got.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(got >= 0.0)


# ------------------------------------------------------------------- EDMD


def test_edmd_identity_snapshots(unit_box):
    basis = RbfBasis.grid(unit_box, [4, 4])
    field = VectorField(2, lambda x: np.zeros(2), unit_box)
    snaps = generate_snapshots(field, random_sampling(300, seed=2), 0.01)
    k = edmd(snaps, basis)
    assert np.max(np.abs(k - np.eye(basis.size))) < 1e-8


def test_edmd_single_basis_function(unit_box):
    basis = RbfBasis(centers=np.array([[5.0, 5.0]]), sigma=1.0, dim=2)
    g = constant_field([0.0, 1.0], unit_box)
    snaps = generate_snapshots(g, random_sampling(100, seed=3), 0.01)
    px = basis.eval_many(snaps.x_points)[:, 0]
    py = basis.eval_many(snaps.y_points)[:, 0]
    expect = (px @ py) / (px @ px)
    k = edmd(snaps, basis)
    assert k[0, 0] == pytest.approx(expect, rel=1e-12)


def test_edmd_heldout_prediction(unit_box):
    basis = RbfBasis.grid(unit_box, [15, 15])
    g = constant_field([0.0, 1.0], unit_box)
    snaps = generate_snapshots(g, grid_sampling([40, 40]), 0.01)
    k = edmd(snaps, basis)
    rng = np.random.default_rng(7)
    xs = rng.uniform(0.5, 9.4, size=(200, 2))
    ys = xs + np.array([0.0, 0.01])
    px = basis.eval_many(xs)
    py = basis.eval_many(ys)
    err = np.linalg.norm(py - px @ k, axis=1)
    assert err.mean() <= 0.10 * np.linalg.norm(py, axis=1).mean()


# ------------------------------------------------------------------ NSDMD


def test_nsdmd_identity_snapshots(unit_box):
    basis = RbfBasis.grid(unit_box, [5, 5])
    field = VectorField(2, lambda x: np.zeros(2), unit_box)
    snaps = generate_snapshots(field, random_sampling(400, seed=4), 0.01)
    approx, report = nsdmd(snaps, basis)
    assert np.linalg.norm(approx.p_hat - np.eye(basis.size)) <= 1e-5
    assert report.objective <= 1e-10
    assert report.converged


def test_nsdmd_feasibility_contract(unit_box):
    basis = RbfBasis.grid(unit_box, [6, 6])
    f, _ = example2_fields()
    field = VectorField(2, f.fn, unit_box)  # reuse drift on the test box
    snaps = generate_snapshots(field, grid_sampling([20, 20]), 0.01)
    approx, report = nsdmd(snaps, basis)
    assert approx.p_hat.min() >= -1e-12
    assert np.max(np.abs(approx.p_hat.sum(axis=1) - 1.0)) <= 1e-8
    col_sums = approx.m_gen.sum(axis=0)
    assert np.max(np.abs(col_sums)) <= 1e-6 / snaps.dt
    assert report.constraint_violation <= 1e-8


def test_nsdmd_toy_feasible_optimum():
    a_hat = np.array([[0.6, 0.4], [0.3, 0.7]])
    approx, report = nsdmd_from_matrices(np.eye(2), a_hat, 0.01)
    assert np.max(np.abs(approx.p_hat - a_hat)) < 1e-6
    assert report.objective < 1e-10


def test_nsdmd_objective_monotone(unit_box):
    basis = RbfBasis.grid(unit_box, [5, 5])
    f, _ = example2_fields()
    field = VectorField(2, f.fn, unit_box)
    snaps = generate_snapshots(field, grid_sampling([15, 15]), 0.01)
    opts = NsdmdOptions(track_objective=True)
    _, report = nsdmd(snaps, basis, opts)
    hist = report.objective_history
    assert hist is not None
    assert np.all(np.diff(hist) <= 1e-15)


def test_nsdmd_duality_transpose_identity(unit_box):
    basis = RbfBasis.grid(unit_box, [4, 4])
    f, _ = example2_fields()
    field = VectorField(2, f.fn, unit_box)
    snaps = generate_snapshots(field, grid_sampling([12, 12]), 0.01)
    approx, _ = nsdmd(snaps, basis)
    rng = np.random.default_rng(9)
    for _ in range(5):
        a = rng.random(basis.size)
        b = rng.random(basis.size)
        left = float(a @ (approx.p_hat @ b))
        right = float((approx.p_hat.T @ a) @ b)
        assert left == pytest.approx(right, rel=1e-12)
    assert np.array_equal(approx.p, approx.p_hat.T)


def test_nsdmd_matches_edmd_when_unconstrained_feasible(unit_box):
    basis = RbfBasis.grid(unit_box, [4, 4])
    field = VectorField(2, lambda x: np.zeros(2), unit_box)
    snaps = generate_snapshots(field, random_sampling(200, seed=6), 0.01)
    approx, _ = nsdmd(snaps, basis)
    assert np.max(np.abs(approx.p_hat - np.eye(basis.size))) <= 1e-5


# -------------------------------------------------------------- generators


def test_learn_generators_zero_drift(unit_box):
    basis = RbfBasis.grid(unit_box, [5, 5])
    zero = VectorField(2, lambda x: np.zeros(2), unit_box)
    g = constant_field([0.0, 1.0], unit_box)
    m0, m1 = learn_generators(zero, g, basis, grid_sampling([15, 15]), 0.01)
    assert np.max(np.abs(m0.sum(axis=0))) <= 1e-6
    assert np.max(np.abs(m1.sum(axis=0))) <= 1e-6
    # stationary flow: generator tiny relative to the 1/dt scale
    assert np.linalg.norm(m0) < 1e-3 * (1.0 / 0.01)
    assert np.linalg.norm(m1) > np.linalg.norm(m0)
