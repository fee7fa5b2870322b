"""Koopman/P-F operator approximation from snapshot data.

EDMD gives the unconstrained least-squares operator K = G^+ A. NSDMD adds
the structure constraints (entrywise nonnegativity, unit row sums) and is
solved with an accelerated projected-gradient method over the product of
row simplices; the accelerated step is accepted only when it decreases the
objective, so the objective sequence is nonincreasing.

Conventions: P_hat is the Koopman-side solution of the constrained
problem, P = P_hat^T approximates the P-F operator on coefficient vectors
(v -> P v), and M = (P_hat^T - I)/dt approximates its generator. Columns of
M sum to zero exactly because rows of P_hat sum to one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import gram_lambda
from .dynamics import generate_snapshots
from .errors import SolverError
from .kernels import project_rows_simplex


@dataclass
class SolverReport:
    iterations: int
    objective: float
    constraint_violation: float
    converged: bool
    objective_history: np.ndarray = None


@dataclass(frozen=True)
class OperatorApprox:
    """Finite-dimensional P-F operator and generator for one vector field."""

    p_hat: np.ndarray
    p: np.ndarray
    m_gen: np.ndarray
    dt: float
    fit_residual: float

    @classmethod
    def from_p_hat(cls, p_hat, dt, fit_residual):
        p = p_hat.T.copy()
        m_gen = (p - np.eye(p.shape[0])) / dt
        return cls(p_hat=p_hat, p=p, m_gen=m_gen, dt=dt, fit_residual=fit_residual)


@dataclass
class NsdmdOptions:
    max_iter: int = 50_000
    rel_tol: float = 1e-9
    track_objective: bool = False
    pinv_rcond: float = 1e-10


def _gram_pair(snapshots, basis):
    """G = mean Psi(x) Psi(x)^T and A = mean Psi(x) Psi(y)^T."""
    px = basis.eval_many(snapshots.x_points)
    py = basis.eval_many(snapshots.y_points)
    m = snapshots.count
    g = (px.T @ px) / m
    a = (px.T @ py) / m
    return 0.5 * (g + g.T), a


def edmd(snapshots, basis, rcond=1e-10):
    """Unconstrained Koopman approximation K = G^+ A.

    Singular values below rcond * sigma_max are truncated in the
    pseudo-inverse.
    """
    g, a = _gram_pair(snapshots, basis)
    return np.linalg.pinv(g, rcond=rcond) @ a


def project_row_simplex(row):
    """Euclidean projection of one vector onto {z >= 0, sum z = 1}."""
    return project_rows_simplex(np.asarray(row, dtype=np.float64)[None, :])[0]


def _solve_spd(mat, rhs, jitter_scale=1e-10):
    """Solve SPD system via Cholesky, escalating jitter when needed."""
    n = mat.shape[0]
    base = jitter_scale * np.trace(mat) / n
    jitter = 0.0
    for _ in range(4):
        try:
            chol = np.linalg.cholesky(mat + jitter * np.eye(n))
            return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else jitter * 100.0
    raise SolverError("Gram matrix is not positive definite even with jitter")


def nsdmd_from_matrices(g_hat, a_hat, dt, opts=None):
    """Constrained least squares min |G_hat P - A_hat|_F over row-stochastic P.

    Accelerated projected gradient with the exact Lipschitz step
    1 / ||G_hat^T G_hat||_2, a monotone safeguard (momentum steps that
    would increase the objective fall back to plain projected gradient with
    backtracking), and stopping on relative objective decrease below
    ``rel_tol`` for three consecutive iterations.
    """
    opts = opts or NsdmdOptions()
    n = g_hat.shape[0]
    h = g_hat.T @ g_hat
    cmat = g_hat.T @ a_hat
    const = float(np.sum(a_hat * a_hat))
    lip = float(np.linalg.eigvalsh(h)[-1])
    if lip <= 0:
        raise SolverError("G_hat^T G_hat has no positive eigenvalue")
    step = 1.0 / lip

    def objective(p):
        # 0.5 |G_hat P - A_hat|_F^2 expanded; avoids forming the residual
        return 0.5 * (float(np.sum(p * (h @ p))) - 2.0 * float(np.sum(p * cmat)) + const)

    x = project_rows_simplex(np.linalg.pinv(g_hat, rcond=opts.pinv_rcond) @ a_hat)
    f_x = objective(x)
    y = x.copy()
    t_acc = 1.0
    history = [f_x] if opts.track_objective else None
    converged = False
    below = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        z = project_rows_simplex(y - step * (h @ y - cmat))
        f_z = objective(z)
        if f_z > f_x:
            # momentum overshoot: restart from the last accepted iterate
            grad = h @ x - cmat
            local = step
            z = project_rows_simplex(x - local * grad)
            f_z = objective(z)
            while f_z > f_x + 1e-15 * abs(f_x) and local > 1e-18 / max(lip, 1.0):
                local *= 0.5
                z = project_rows_simplex(x - local * grad)
                f_z = objective(z)
            t_acc = 1.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = z + ((t_acc - 1.0) / t_next) * (z - x)
        t_acc = t_next
        decrease = f_x - f_z
        rel = decrease / max(abs(f_x), 1e-300)
        x, f_x = z, f_z
        if history is not None:
            history.append(f_x)
        below = below + 1 if rel < opts.rel_tol else 0
        if below >= 3:
            converged = True
            break
    row_err = float(np.max(np.abs(x.sum(axis=1) - 1.0)))
    neg = float(max(0.0, -x.min()))
    report = SolverReport(
        iterations=it,
        objective=math.sqrt(max(2.0 * f_x, 0.0)),
        constraint_violation=max(row_err, neg),
        converged=converged,
        objective_history=None if history is None else np.asarray(history),
    )
    return OperatorApprox.from_p_hat(x, dt, report.objective), report


def nsdmd(snapshots, basis, opts=None):
    """NSDMD operator approximation from snapshot data.

    Builds G_hat = G Lambda^-1 and A_hat = A Lambda^-1 (Lambda applied via
    Cholesky solves, never an explicit inverse) and solves the constrained
    problem. Non-convergence is flagged on the report, not raised.
    """
    g, a = _gram_pair(snapshots, basis)
    lam = gram_lambda(basis)
    g_hat = _solve_spd(lam, g.T).T
    a_hat = _solve_spd(lam, a.T).T
    return nsdmd_from_matrices(g_hat, a_hat, snapshots.dt, opts)


def learn_generators(f_field, g_field, basis, sampling, dt, opts=None):
    """Learn the P-F generators M0 (drift field) and M1 (input field).

    Snapshots are generated independently per field from its own flow; the
    input field is treated as an autonomous system xdot = g(x).
    """
    out = []
    for label, fld in (("drift", f_field), ("input", g_field)):
        try:
            snaps = generate_snapshots(fld, sampling, dt)
            approx, _ = nsdmd(snaps, basis, opts)
        except Exception as exc:
            raise SolverError(f"generator learning failed for {label} field: {exc}") from exc
        out.append(approx.m_gen)
    return out[0], out[1]
