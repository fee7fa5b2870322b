import math

import numpy as np
import pytest

from pfnav.basis import (
    RbfBasis,
    ball_region,
    box_region,
    complement_region,
    gram_lambda,
    implicit_region,
    intersection_region,
    mass_matrix_d,
    project_density,
    true_gram,
    union_region,
)
from pfnav.dynamics import Box
from pfnav.errors import PfnavError, ProjectionError


# ------------------------------------------------------------------ regions


def test_region_membership_kinds():
    box = box_region([0.0, 0.0], [1.0, 2.0])
    ball = ball_region([0.0, 0.0], 1.0)
    imp = implicit_region("x1 + x2 - 1")  # inside iff x1 + x2 <= 1
    pts = np.array([[0.5, 0.5], [2.0, 0.1], [0.1, 0.2], [-0.5, -0.5]])
    assert list(box.contains(pts)) == [True, False, True, False]
    assert list(ball.contains(pts)) == [True, False, True, True]
    assert list(imp.contains(pts)) == [True, False, True, True]
    assert list(complement_region(box).contains(pts)) == [False, True, False, True]
    assert list(union_region(box, ball).contains(pts)) == [True, False, True, True]
    assert list(intersection_region(box, imp).contains(pts)) == [True, False, True, False]


def test_region_volumes():
    assert box_region([0, 0], [2, 3]).volume() == pytest.approx(6.0)
    assert ball_region([0, 0], 2.0).volume() == pytest.approx(math.pi * 4.0)
    within = Box([-2, -2], [2, 2])
    quad = implicit_region("x1*x1 + x2*x2 - 1").volume(within=within, resolution=500)
    assert quad == pytest.approx(math.pi, rel=1e-2)


# ------------------------------------------------------------------- basis


def test_eval_center_is_one(small_basis):
    psi = small_basis.eval(small_basis.centers[7])
    assert psi[7] == pytest.approx(1.0, abs=1e-14)
    assert np.all(psi > 0.0)
    assert np.all(psi <= 1.0)


def test_eval_one_sigma_offset(small_basis):
    x = small_basis.centers[3] + np.array([small_basis.sigma, 0.0])
    psi = small_basis.eval(x)
    assert psi[3] == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_eval_strictly_positive_far_away(small_basis):
    psi = small_basis.eval(np.array([1e3, -1e3]))
    assert np.all(psi >= 0.0)  # underflows to zero only at absurd distances
    psi = small_basis.eval(np.array([12.0, 12.0]))
    assert np.all(psi > 0.0)


def test_grid_sigma_rule(unit_box):
    basis = RbfBasis.grid(unit_box, [25, 25])
    d = basis.spacing
    assert d <= 3.0 * basis.sigma <= 1.5 * d
    with pytest.raises(ValueError):
        RbfBasis.grid(unit_box, [25, 25], sigma_factor=0.6)


def test_duplicate_centers_rejected():
    with pytest.raises(ValueError):
        RbfBasis(centers=np.array([[0.0, 0.0], [0.0, 0.0]]), sigma=1.0, dim=2)


# ------------------------------------------------------------- gram matrix


def test_gram_diagonal_value():
    basis = RbfBasis(centers=np.array([[0.0, 0.0], [2.0, 0.0]]), sigma=1.0, dim=2)
    lam = gram_lambda(basis)
    assert lam[0, 0] == pytest.approx(math.pi / 2.0, abs=1e-12)
    assert lam[1, 1] == pytest.approx(math.pi / 2.0, abs=1e-12)
    assert lam[0, 1] == pytest.approx((math.pi / 2.0) * math.exp(-2.0), abs=1e-8)


def test_gram_symmetric_positive_definite():
    rng = np.random.default_rng(3)
    basis = RbfBasis(centers=rng.uniform(0, 5, size=(12, 2)), sigma=0.7, dim=2)
    lam = gram_lambda(basis)
    assert np.array_equal(lam, lam.T)
    assert np.linalg.eigvalsh(lam)[0] > 0.0


def test_gram_matches_quadrature_of_its_convention():
    # The closed form is the exact Gram of exp(-|x-c|^2/sigma^2) Gaussians
    # (the paper's Lambda display and its RBF definition differ by the
    # factor of two in the exponent; the pipeline only needs a SPD kernel).
    box = Box([-1.0, -1.0], [1.0, 1.0])
    basis = RbfBasis.grid(box, [3, 3], sigma=0.25)
    lam = gram_lambda(basis)
    span = 10.0 * basis.sigma
    lo = basis.centers.min(axis=0) - span
    hi = basis.centers.max(axis=0) + span
    xs = np.linspace(lo[0], hi[0], 801)
    ys = np.linspace(lo[1], hi[1], 801)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    sq = ((pts[:, None, :] - basis.centers[None, :, :]) ** 2).sum(axis=2)
    phi = np.exp(-sq / basis.sigma**2)  # width-sigma/sqrt(2) convention
    quad = (phi.T @ phi) * cell
    assert np.max(np.abs(quad - lam)) / np.max(np.abs(lam)) < 1e-3


# ------------------------------------------------------------- mass matrix


def test_mass_matrix_single_center_1d():
    box = Box([-10.0], [10.0])
    basis = RbfBasis(centers=np.array([[0.0]]), sigma=1.0, dim=1)
    region = box_region([-10.0], [10.0])
    d = mass_matrix_d(basis, region, box, resolution=2000)
    assert d[0, 0] == pytest.approx(math.sqrt(math.pi), abs=1e-4)


def test_mass_matrix_psd_and_bounded(unit_box, small_basis):
    region = box_region([2.0, 2.0], [8.0, 8.0])
    d = mass_matrix_d(small_basis, region, unit_box, resolution=150)
    assert np.array_equal(d, d.T)
    assert np.linalg.eigvalsh(d)[0] >= -1e-10
    assert np.all(d >= 0.0)


def test_mass_matrix_full_domain_matches_exact_gram():
    # Domain extends far beyond the centers, so the box integral is close
    # to the closed-form R^n integral of the eval-convention Gaussians.
    box = Box([-3.0, -3.0], [3.0, 3.0])
    basis = RbfBasis.grid(Box([-0.5, -0.5], [0.5, 0.5]), [3, 3], sigma=0.15)
    d = mass_matrix_d(basis, box_region(box.lo, box.hi), box, resolution=600)
    exact = true_gram(basis)
    assert np.max(np.abs(d - exact)) / np.max(exact) < 1e-2


def test_mass_matrix_sliver_yields_zeros(unit_box, small_basis):
    sliver = box_region([5.0, 5.0], [5.0 + 1e-9, 5.0 + 1e-9])
    with pytest.raises(PfnavError):
        mass_matrix_d(small_basis, box_region([5.0, 5.0], [5.0, 5.0]), unit_box)
    d = mass_matrix_d(small_basis, sliver, unit_box, resolution=100)
    assert np.all(d == 0.0)


# --------------------------------------------------------------- projection


def test_project_exact_basis_function(small_basis, unit_box):
    target = small_basis.represent(np.eye(small_basis.size)[0])
    grid = unit_box.grid([40, 40])
    fit = project_density(small_basis, target, grid, ridge=0.0)
    expect = np.zeros(small_basis.size)
    expect[0] = 1.0
    assert np.max(np.abs(fit.coef - expect)) < 1e-8
    assert fit.fit_residual < 1e-8


def test_project_zero_function(small_basis, unit_box):
    fit = project_density(small_basis, lambda p: np.zeros(len(p)), unit_box.grid([30, 30]))
    assert np.all(fit.coef == 0.0)


def test_project_span_member_exact(unit_box):
    basis = RbfBasis.grid(unit_box, [6, 6], sigma_factor=0.45)
    rng = np.random.default_rng(11)
    coef = rng.standard_normal(basis.size)
    fit = project_density(basis, basis.represent(coef), unit_box.grid([50, 50]), ridge=0.0)
    assert fit.fit_residual < 1e-8
    assert np.max(np.abs(fit.coef - coef)) < 1e-6


def test_project_rank_deficient_raises(unit_box):
    basis = RbfBasis.grid(unit_box, [8, 8], sigma_factor=0.4)
    tiny_grid = unit_box.grid([3, 3])  # 9 rows for 64 unknowns
    with pytest.raises(ProjectionError, match="ridge"):
        project_density(basis, lambda p: np.ones(len(p)), tiny_grid, ridge=0.0)


def test_project_uniform_initial_density_integral(unit_box):
    # uniform 1/2 on [0,1]x[5,7]; the fit should carry total mass ~1
    basis = RbfBasis.grid(unit_box, [20, 20], sigma_factor=0.4)
    x0 = box_region([0.0, 5.0], [1.0, 7.0])

    def h0(points):
        return 0.5 * x0.contains(points)

    fit = project_density(basis, h0, unit_box.grid([150, 150]), ridge=1e-8, role="initial")
    total = float(basis.box_integrals(unit_box) @ fit.coef)
    assert total == pytest.approx(1.0, abs=0.05)
