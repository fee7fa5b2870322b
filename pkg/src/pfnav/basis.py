"""Gaussian RBF dictionary and the function-space plumbing built on it.

Everything downstream (operators, densities, hazards, controllers) works
with coefficient vectors against one shared dictionary
psi_k(x) = exp(-|x - c_k|^2 / (2 sigma^2)).

Note on the Gram matrix: ``gram_lambda`` returns the closed form
(pi sigma^2 / 2)^(n/2) * exp(-|c_i - c_j|^2 / (2 sigma^2)). That expression
is the exact Gram integral for Gaussians of width sigma/sqrt(2), i.e. it is
consistent with the convention exp(-|x-c|^2 / sigma^2) rather than with
``eval`` above. Both conventions give a symmetric positive definite kernel
matrix and the operator-learning pipeline only needs that; see
``true_gram`` for the exact integral of the ``eval`` convention.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Box
from .errors import PfnavError, ProjectionError
from .kernels import rbf_eval

_EXPR_NAMES = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "pi": np.pi,
    "tanh": np.tanh,
    "log": np.log,
}


@dataclass(frozen=True)
class Region:
    """Membership-testable subset of the state space.

    kinds: box(lo, hi), ball(center, radius), implicit(fn), where membership
    is fn(x) <= 0, complement(of), union(parts), intersection(parts).
    """

    kind: str
    lo: np.ndarray = None
    hi: np.ndarray = None
    center: np.ndarray = None
    radius: float = 0.0
    fn: object = None
    parts: tuple = ()

    def contains(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "box":
            return np.all((p >= self.lo) & (p <= self.hi), axis=1)
        if self.kind == "ball":
            d = p - self.center
            return np.einsum("ij,ij->i", d, d) <= self.radius**2
        if self.kind == "implicit":
            return np.asarray(self.fn(p), dtype=np.float64) <= 0.0
        if self.kind == "complement":
            return ~self.parts[0].contains(p)
        if self.kind == "union":
            out = np.zeros(p.shape[0], dtype=bool)
            for part in self.parts:
                out |= part.contains(p)
            return out
        if self.kind == "intersection":
            out = np.ones(p.shape[0], dtype=bool)
            for part in self.parts:
                out &= part.contains(p)
            return out
        raise PfnavError(f"unknown region kind {self.kind!r}")

    def volume(self, within=None, resolution=400):
        """Lebesgue volume; analytic for box/ball, quadrature otherwise."""
        if self.kind == "box":
            return float(np.prod(self.hi - self.lo))
        if self.kind == "ball":
            n = self.center.size
            return math.pi ** (n / 2) * self.radius**n / math.gamma(n / 2 + 1)
        if within is None:
            raise PfnavError(f"{self.kind} region needs a bounding box for volume")
        pts = within.grid([resolution] * within.dim)
        frac = float(np.count_nonzero(self.contains(pts))) / len(pts)
        return frac * within.volume()


def box_region(lo, hi):
    return Region("box", lo=np.asarray(lo, float), hi=np.asarray(hi, float))


def ball_region(center, radius):
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    return Region("ball", center=np.asarray(center, float), radius=float(radius))


def implicit_region(fn_or_expr, dim=None):
    """Region {x : fn(x) <= 0}. Accepts a vectorized callable or expression."""
    if callable(fn_or_expr):
        return Region("implicit", fn=fn_or_expr)
    code = compile(fn_or_expr, "<region>", "eval")

    def fn(p):
        ns = {f"x{i + 1}": p[:, i] for i in range(p.shape[1])}
        ns.update(_EXPR_NAMES)
        ns["__builtins__"] = {}
        return np.broadcast_to(eval(code, ns), (p.shape[0],))

    return Region("implicit", fn=fn)


def complement_region(region):
    return Region("complement", parts=(region,))


def union_region(*regions):
    return Region("union", parts=tuple(regions))


def intersection_region(*regions):
    return Region("intersection", parts=tuple(regions))


@dataclass(frozen=True)
class RbfBasis:
    """Shared-width Gaussian RBF dictionary."""

    centers: np.ndarray
    sigma: float
    dim: int
    spacing: float = None  # center grid spacing when built via grid()

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        object.__setattr__(self, "centers", c)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if c.shape[1] != self.dim:
            raise ValueError("center dimension mismatch")
        if len(np.unique(c, axis=0)) != len(c):
            raise ValueError("centers must be distinct")

    @property
    def size(self):
        return self.centers.shape[0]

    @classmethod
    def grid(cls, box, dims, sigma=None, sigma_factor=0.4):
        """Cell-centered center grid; auto sigma obeys d <= 3*sigma <= 1.5*d."""
        centers = box.grid(dims)
        spacings = (box.hi - box.lo) / np.asarray(dims, dtype=np.float64)
        d = float(np.mean(spacings))
        if sigma is None:
            if not (1.0 / 3.0 <= sigma_factor <= 0.5):
                raise ValueError("sigma_factor must lie in [1/3, 1/2]")
            sigma = sigma_factor * d
        return cls(centers=centers, sigma=float(sigma), dim=box.dim, spacing=d)

    def eval(self, x):
        """Basis vector at one state; entries in (0, 1], total function."""
        return rbf_eval(np.asarray(x, float)[None, :], self.centers, self.sigma)[0]

    def eval_many(self, points):
        return rbf_eval(points, self.centers, self.sigma)

    def represent(self, coef):
        """Pointwise-evaluable function Psi(x)^T coef."""
        coef = np.asarray(coef, dtype=np.float64)

        def fn(points):
            return self.eval_many(points) @ coef

        return fn

    def box_integrals(self, box):
        """Analytic per-function integrals over an axis-aligned box."""
        root2 = math.sqrt(2.0)
        scale = self.sigma * math.sqrt(math.pi / 2.0)
        out = np.ones(self.size)
        for ax in range(self.dim):
            a = (box.lo[ax] - self.centers[:, ax]) / (self.sigma * root2)
            b = (box.hi[ax] - self.centers[:, ax]) / (self.sigma * root2)
            out *= scale * (np.vectorize(math.erf)(b) - np.vectorize(math.erf)(a))
        return out

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.centers).tobytes())
        h.update(repr(float(self.sigma)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class CoefVector:
    """Coefficient vector against the shared dictionary.

    The role tag records intent (density rho, signed rho-bar, initial h0,
    hazard p); nonnegativity of the represented function is never implied
    by the tag.
    """

    coef: np.ndarray
    role: str
    fit_residual: float = None

    _ROLES = ("density", "signed", "initial", "hazard")

    def __post_init__(self):
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=np.float64))
        if self.role not in self._ROLES:
            raise ValueError(f"role must be one of {self._ROLES}")


def _pairwise_sq_dists(centers):
    c2 = np.einsum("ij,ij->i", centers, centers)
    sq = c2[:, None] + c2[None, :] - 2.0 * (centers @ centers.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def gram_lambda(basis):
    """Closed-form Lambda matrix, (pi s^2/2)^(n/2) exp(-|ci-cj|^2/(2 s^2))."""
    sq = _pairwise_sq_dists(basis.centers)
    lam = (math.pi * basis.sigma**2 / 2.0) ** (basis.dim / 2.0) * np.exp(
        -sq / (2.0 * basis.sigma**2)
    )
    lam = 0.5 * (lam + lam.T)
    np.fill_diagonal(lam, (math.pi * basis.sigma**2 / 2.0) ** (basis.dim / 2.0))
    return lam


def true_gram(basis):
    """Exact integral of Psi Psi^T over R^n for the ``eval`` convention."""
    sq = _pairwise_sq_dists(basis.centers)
    out = (math.pi * basis.sigma**2) ** (basis.dim / 2.0) * np.exp(
        -sq / (4.0 * basis.sigma**2)
    )
    return 0.5 * (out + out.T)


def mass_matrix_d(basis, region_x1, box, resolution=200, chunk=4096):
    """D = integral of Psi Psi^T over region_x1, midpoint tensor quadrature.

    The grid is cell-centered over ``box`` with membership masking, so the
    excluded neighborhood is resolved up to the grid resolution. A region
    invisible to the grid yields the zero matrix.
    """
    if region_x1.kind in ("box", "ball") and region_x1.volume() <= 0:
        raise PfnavError("region has zero volume")
    pts = box.grid([resolution] * box.dim)
    cell = box.volume() / len(pts)
    mask = region_x1.contains(pts)
    pts = pts[mask]
    n = basis.size
    d = np.zeros((n, n))
    for start in range(0, len(pts), chunk):
        block = basis.eval_many(pts[start : start + chunk])
        d += block.T @ block
    d *= cell
    return 0.5 * (d + d.T)


def project_density(basis, f, quad_points, ridge=1e-8, role="density", chunk=4096):
    """Ridge-regularized least-squares fit of a pointwise function.

    Minimizes sum_q (Psi(x_q)^T c - f(x_q))^2 + ridge |c|^2 over the given
    quadrature points and reports the relative fit residual.
    """
    pts = np.atleast_2d(np.asarray(quad_points, dtype=np.float64))
    if len(pts) == 0:
        raise ValueError("quad grid must be nonempty")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    n = basis.size
    ata = np.zeros((n, n))
    atf = np.zeros(n)
    cached_vals = []
    for start in range(0, len(pts), chunk):
        block_pts = pts[start : start + chunk]
        block = basis.eval_many(block_pts)
        try:
            vals = np.asarray(f(block_pts), dtype=np.float64).reshape(len(block_pts))
        except Exception:
            vals = np.array([float(f(p)) for p in block_pts])
        ata += block.T @ block
        atf += block.T @ vals
        cached_vals.append(vals)
    reg = ata + ridge * np.eye(n)
    try:
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise ProjectionError(
            "design matrix is rank deficient on this grid; pass ridge > 0"
        )
    coef = _chol_solve(chol, atf)
    # one step of iterative refinement on the normal equations
    coef += _chol_solve(chol, atf - reg @ coef)
    # second pass for the residual; the expanded quadratic form cancels badly
    res_sq = 0.0
    f2 = 0.0
    for start, vals in zip(range(0, len(pts), chunk), cached_vals):
        block = basis.eval_many(pts[start : start + chunk])
        diff = block @ coef - vals
        res_sq += float(diff @ diff)
        f2 += float(vals @ vals)
    rel = math.sqrt(res_sq) / max(math.sqrt(f2), 1e-300)
    return CoefVector(coef=coef, role=role, fit_residual=rel)


def _chol_solve(chol, rhs):
    from numpy.linalg import solve

    return solve(chol.T, solve(chol, rhs))
