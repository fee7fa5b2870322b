"""Finite-dimensional safety verification and controller synthesis.

The continuous problems (stationarity of the occupation density plus a
hazard-mass cap) are assembled against the learned generators and solved
with the dense primal-dual interior-point solver in this module.

Structural note that shapes everything here: learned generators satisfy
1^T M = 0 exactly (unit row sums of the Markov matrix), so the equality
-M0 v - M1 w = m admits no exact solution whenever sum(m) != 0, which is
always the case for a normalized initial density. The continuous problem
dodges this by enforcing the density PDE only on X1, away from the target
neighborhood where the mass sink lives. The finite-dimensional analog is
the ``free_rows`` mask: equality rows whose basis functions sit inside the
target neighborhood are released (they absorb the injected mass), and the
remaining rows are enforced exactly, with a capped-slack fallback for
learned-operator noise.

Without a mask the solver falls back to deflating m by its mean, which is
the minimal max-norm slack: the residual floor is then |sum(m)| / N and
the equality tolerance must sit above it, else the problem is reported
equality-infeasible with the exact attainable residual. Mean deflation
spreads the sink uniformly over the state space, which degrades how well
u.D v tracks the true hazard-weighted occupancy, so passing a sink mask
is strongly preferred.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError

# ---------------------------------------------------------------------------
# Linear programming: homogeneous self-dual Mehrotra predictor-corrector
# ---------------------------------------------------------------------------


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective: float
    iterations: int
    kkt: dict

    @property
    def optimal(self):
        return self.status == "optimal"


def _equilibrate(a, b, c, iters=6):
    """Ruiz row/column scaling. Returns scaled copies and the diagonals."""
    m, k = a.shape
    dr = np.ones(m)
    dc = np.ones(k)
    a = a.copy()
    for _ in range(iters):
        if a.size == 0:
            break
        rmax = np.sqrt(np.maximum(np.abs(a).max(axis=1), 1e-12))
        cmax = np.sqrt(np.maximum(np.abs(a).max(axis=0), 1e-12))
        a /= rmax[:, None]
        a /= cmax[None, :]
        dr /= rmax
        dc /= cmax
    return a, b * dr, c * dc, dr, dc


def _chol_with_jitter(mat):
    n = mat.shape[0]
    base = np.trace(mat) / max(n, 1)
    jitter = 0.0
    for _ in range(6):
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter = 1e-12 * base if jitter == 0.0 else jitter * 100.0
    raise SolverError("normal-equation matrix is numerically indefinite")


def _chol_solve(chol, rhs):
    return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def _max_step(vals, dirs):
    """Largest alpha with vals + alpha*dirs >= 0 (vals > 0)."""
    neg = dirs < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-vals[neg] / dirs[neg]))


def _ip_hsd(a, b, c, tol, max_iter):
    """Core solver: min c.x s.t. a x = b, x >= 0 via the self-dual embedding.

    Follows the standard homogeneous formulation: iterates (x, y, z, tau,
    kappa) with residuals r_p = b tau - A x, r_d = c tau - A^T y - z,
    r_g = kappa + c.x - b.y. tau -> positive limit gives an optimal point
    x/tau; tau -> 0 certifies primal infeasibility (b.y > 0) or
    unboundedness (c.x < 0).
    """
    m, k = a.shape
    x = np.ones(k)
    y = np.zeros(m)
    z = np.ones(k)
    tau, kappa = 1.0, 1.0

    def residuals():
        r_p = b * tau - a @ x
        r_d = c * tau - a.T @ y - z
        r_g = kappa + c @ x - b @ y
        mu = (x @ z + tau * kappa) / (k + 1)
        return r_p, r_d, r_g, mu

    r_p0, r_d0, r_g0, mu0 = residuals()
    denom_p = max(1.0, float(np.linalg.norm(r_p0)))
    denom_d = max(1.0, float(np.linalg.norm(r_d0)))
    denom_g = max(1.0, abs(r_g0))

    for it in range(1, max_iter + 1):
        r_p, r_d, r_g, mu = residuals()
        rho_p = float(np.linalg.norm(r_p)) / denom_p
        rho_d = float(np.linalg.norm(r_d)) / denom_d
        rho_g = abs(r_g) / denom_g
        rho_mu = mu / mu0
        cx = float(c @ x)
        by = float(b @ y)
        rho_gap = abs(cx - by) / (tau + abs(by))
        if rho_p <= tol and rho_d <= tol and rho_gap <= tol:
            xs = x / tau
            return LpResult(
                status="optimal",
                x=xs,
                objective=float(c @ xs),
                iterations=it,
                kkt={"primal": rho_p, "dual": rho_d, "gap": rho_gap},
            )
        tau_small = (
            rho_p <= tol and rho_d <= tol and rho_g <= tol and tau <= tol * max(1.0, kappa)
        ) or (rho_mu <= tol and tau <= tol * min(1.0, kappa))
        if tau_small:
            status = "infeasible" if by > tol else "unbounded"
            return LpResult(
                status=status,
                x=np.full(k, np.nan),
                objective=np.nan,
                iterations=it,
                kkt={"primal": rho_p, "dual": rho_d, "gap": rho_gap},
            )

        dinv = x / z  # inverse of the scaling diagonal z/x
        mmat = (a * dinv) @ a.T
        chol = _chol_with_jitter(mmat)

        def newton(gamma, rxs, rtk):
            eta = 1.0 - gamma
            q = eta * r_d - rxs / x
            adq = a @ (dinv * q)
            adc = a @ (dinv * c)
            dy1 = _chol_solve(chol, eta * r_p + adq)
            dy2 = _chol_solve(chol, b + adc)
            dx1 = dinv * (a.T @ dy1 - q)
            dx2 = dinv * (a.T @ dy2 - c)
            denom = kappa / tau - float(c @ dx2) + float(b @ dy2)
            numer = eta * r_g + float(c @ dx1) - float(b @ dy1) + rtk / tau
            dtau = numer / denom
            dx = dx1 + dtau * dx2
            dy = dy1 + dtau * dy2
            dz = (rxs - z * dx) / x
            dkappa = (rtk - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        # predictor
        rxs = -x * z
        rtk = -tau * kappa
        dxa, dya, dza, dta, dka = newton(0.0, rxs, rtk)
        alpha_aff = min(
            1.0,
            _max_step(x, dxa),
            _max_step(z, dza),
            _max_step(np.array([tau]), np.array([dta])),
            _max_step(np.array([kappa]), np.array([dka])),
        )
        mu_aff = (
            (x + alpha_aff * dxa) @ (z + alpha_aff * dza)
            + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)
        ) / (k + 1)
        gamma = min(max((mu_aff / mu) ** 3, 0.0), 1.0)

        # corrector with second-order terms
        rxs = gamma * mu - x * z - dxa * dza
        rtk = gamma * mu - tau * kappa - dta * dka
        dx, dy, dz, dtau, dkappa = newton(gamma, rxs, rtk)
        alpha = 0.99995 * min(
            _max_step(x, dx),
            _max_step(z, dz),
            _max_step(np.array([tau]), np.array([dtau])),
            _max_step(np.array([kappa]), np.array([dkappa])),
        )
        alpha = min(alpha, 1.0)
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa

    r_p, r_d, r_g, mu = residuals()
    raise SolverError(
        "interior-point iteration limit reached "
        f"(primal {np.linalg.norm(r_p):.2e}, dual {np.linalg.norm(r_d):.2e}, "
        f"gap {abs(r_g):.2e}, mu {mu:.2e})"
    )


def _to_standard_form(c, a_eq, b_eq, bounds):
    """Rewrite general bounds as shifts, sign flips, splits, and cap rows."""
    c = np.asarray(c, dtype=np.float64)
    k0 = c.size
    if a_eq is None:
        a_eq = np.zeros((0, k0))
        b_eq = np.zeros(0)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=np.float64))
    b_eq = np.asarray(b_eq, dtype=np.float64)
    if bounds is None:
        bounds = [(0.0, None)] * k0
    if len(bounds) != k0:
        raise ValueError("bounds length mismatch")

    cols = []  # columns of the standard-form A (over the original rows)
    c_std = []
    recover = []  # (kind, payload) per original variable
    caps = []  # (std column index, cap value)
    obj_shift = 0.0
    b_new = b_eq.copy()

    for i, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if hi <= lo:
            raise ValueError(f"bound {i}: need lo < hi")
        col = a_eq[:, i]
        if np.isfinite(lo):
            # x = x' + lo with x' in [0, hi - lo]
            b_new -= col * lo
            obj_shift += c[i] * lo
            idx = len(cols)
            cols.append(col)
            c_std.append(c[i])
            recover.append(("affine", idx, lo, 1.0))
            if np.isfinite(hi):
                caps.append((idx, hi - lo))
        elif np.isfinite(hi):
            # x = hi - x' with x' >= 0
            b_new -= col * hi
            obj_shift += c[i] * hi
            idx = len(cols)
            cols.append(-col)
            c_std.append(-c[i])
            recover.append(("affine", idx, hi, -1.0))
        else:
            idx = len(cols)
            cols.append(col)
            cols.append(-col)
            c_std.extend([c[i], -c[i]])
            recover.append(("split", idx, 0.0, 1.0))

    a_std = np.column_stack(cols) if cols else np.zeros((a_eq.shape[0], 0))
    c_std = np.asarray(c_std)
    # cap rows x_idx + s = cap, one slack column each
    if caps:
        n_caps = len(caps)
        base_cols = a_std.shape[1]
        a_std = np.vstack([a_std, np.zeros((n_caps, base_cols))])
        a_std = np.hstack([a_std, np.zeros((a_std.shape[0], n_caps))])
        b_new = np.concatenate([b_new, np.zeros(n_caps)])
        c_std = np.concatenate([c_std, np.zeros(n_caps)])
        for row, (idx, cap) in enumerate(caps):
            a_std[a_eq.shape[0] + row, idx] = 1.0
            a_std[a_eq.shape[0] + row, base_cols + row] = 1.0
            b_new[a_eq.shape[0] + row] = cap

    def recover_x(x_std):
        out = np.empty(k0)
        for i, (kind, idx, offset, sign) in enumerate(recover):
            if kind == "affine":
                out[i] = offset + sign * x_std[idx]
            else:
                out[i] = x_std[idx] - x_std[idx + 1]
        return out

    return a_std, b_new, c_std, obj_shift, recover_x


def lp_solve(c, a_eq=None, b_eq=None, bounds=None, tol=1e-9, max_iter=200):
    """Dense LP solver: min c.x s.t. a_eq x = b_eq plus per-variable bounds.

    bounds is a list of (lo, hi) pairs with None for unbounded sides;
    omitted bounds mean x >= 0. Equality rows should be linearly
    independent. Returns an LpResult with status optimal, infeasible, or
    unbounded; iteration exhaustion raises SolverError with residuals.
    """
    a_std, b_std, c_std, obj_shift, recover_x = _to_standard_form(c, a_eq, b_eq, bounds)
    m, k = a_std.shape
    # drop all-zero rows; a zero row with nonzero rhs is plainly infeasible
    if m:
        row_norm = np.abs(a_std).max(axis=1) if k else np.zeros(m)
        zero_rows = row_norm <= 0.0
        if np.any(zero_rows):
            if np.any(np.abs(b_std[zero_rows]) > tol):
                return LpResult("infeasible", np.full(len(c), np.nan), np.nan, 0, {})
            a_std = a_std[~zero_rows]
            b_std = b_std[~zero_rows]
            m = a_std.shape[0]
    if m == 0:
        # separable: each coordinate minimizes independently at 0
        if np.all(c_std >= -1e-15):
            x_std = np.zeros(k)
            return LpResult(
                "optimal", recover_x(x_std), obj_shift, 0, {"primal": 0.0, "dual": 0.0, "gap": 0.0}
            )
        return LpResult("unbounded", np.full(len(c), np.nan), np.nan, 0, {})
    a_s, b_s, c_s, dr, dc = _equilibrate(a_std, b_std, c_std)
    res = _ip_hsd(a_s, b_s, c_s, tol, max_iter)
    if not res.optimal:
        return LpResult(res.status, np.full(len(c), np.nan), np.nan, res.iterations, res.kkt)
    x_std = dc * res.x
    x = recover_x(x_std)
    objective = float(np.asarray(c, dtype=np.float64) @ x)
    return LpResult("optimal", x, objective, res.iterations, res.kkt)


# ---------------------------------------------------------------------------
# Problem assembly and the two solve entry points
# ---------------------------------------------------------------------------


def default_equality_tol(m_coef):
    """Spec default raised to the structural floor |sum(m)|/N when needed."""
    m_coef = np.asarray(m_coef, dtype=np.float64)
    n = m_coef.size
    spec_default = 1e-6 * float(np.max(np.abs(m_coef))) * n
    floor = abs(float(np.mean(m_coef)))
    return max(spec_default, 1.5 * floor)


@dataclass
class SafetyProblem:
    """Assembled finite-dimensional data of the synthesis feasibility problem.

    ``free_rows`` marks equality rows released as the mass sink (basis
    functions supported in the target neighborhood); None enforces all rows
    via the mean-deflation fallback.
    """

    m0: np.ndarray
    m1: np.ndarray
    m: np.ndarray
    d: np.ndarray
    u: np.ndarray
    gamma: float
    input_bound: float
    equality_tol: float = None
    free_rows: np.ndarray = None

    def __post_init__(self):
        n = self.m.size
        for name in ("m0", "m1", "d"):
            mat = getattr(self, name)
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {mat.shape}")
        if self.u.size != n:
            raise ValueError("u dimension mismatch")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.input_bound <= 0:
            raise ValueError("input_bound must be positive")
        if self.free_rows is not None:
            self.free_rows = np.asarray(self.free_rows, dtype=bool)
            if self.free_rows.shape != (n,):
                raise ValueError("free_rows must be a length-N boolean mask")
            if not self.free_rows.any():
                self.free_rows = None
        if self.equality_tol is None:
            if self.free_rows is not None:
                n_arr = self.m
                self.equality_tol = 1e-6 * float(np.max(np.abs(n_arr))) * n
            else:
                self.equality_tol = default_equality_tol(self.m)

    @property
    def size(self):
        return self.m.size


@dataclass
class DensityPair:
    """Solution coefficients: v represents rho, w represents rho-bar."""

    v: np.ndarray
    w: np.ndarray
    residual_eq: float
    hazard_value: float


@dataclass
class SynthesisOutcome:
    status: str  # "feasible" | "gamma_infeasible" | "equality_infeasible"
    pair: DensityPair = None
    best_gamma: float = None
    max_residual: float = None
    lp_iterations: int = 0
    used_fallback: bool = False

    @property
    def feasible(self):
        return self.status == "feasible"


def _hazard_costs(d, u):
    return d.T @ u


def _min_residual_lp(cone_cols, rhs, tol=1e-8):
    """Exact minimal max-norm equality residual over the cone constraints.

    Variables: cone block (per caller transform), slack split s+ and s-,
    and the shared cap t with |s_i| <= t enforced via cap rows.
    """
    n = rhs.size
    width = cone_cols.shape[1]
    eye = np.eye(n)
    a_eq = np.hstack([cone_cols, eye, -eye, np.zeros((n, 1))])
    # cap rows: s+_i - t <= 0 and s-_i - t <= 0 as equalities with slacks
    rows = []
    for sign in range(2):
        block = np.zeros((n, a_eq.shape[1]))
        block[:, width + sign * n : width + (sign + 1) * n] = eye
        block[:, -1] = -1.0
        rows.append(block)
    a_full = np.vstack([a_eq, *rows])
    a_full = np.hstack([a_full, np.zeros((a_full.shape[0], 2 * n))])
    for i in range(2 * n):
        a_full[n + i, a_eq.shape[1] + i] = 1.0  # slack for the cap row
    b_full = np.concatenate([rhs, np.zeros(2 * n)])
    c = np.zeros(a_full.shape[1])
    c[a_eq.shape[1] - 1] = 1.0  # minimize t
    res = lp_solve(c, a_full, b_full, tol=tol, max_iter=300)
    if not res.optimal:
        raise SolverError(f"residual diagnostic LP returned {res.status}")
    return float(res.x[a_eq.shape[1] - 1])


def _solve_hazard_lp(
    cone_cols,
    m_vec,
    free_rows,
    tol_eq,
    hz_coeffs,
    lp_tol,
    drop_cols=None,
    blocked_rows=None,
    blocked_penalty=10.0,
):
    """Shared core: min t >= max(0, hazard) over cone vars meeting the equality.

    cone_cols: (N, K) equality coefficients over nonnegative variables;
    hz_coeffs: (K,) with hazard value = hz_coeffs . x.

    Absorbing structure: rows in ``free_rows`` (the target sink) and
    ``blocked_rows`` (hard obstacles) receive one-signed absorption
    variables a >= 0 turning their balance into -M v - M1 w + a = m, and
    their density variables (drop_cols) are pinned to zero, so absorbed
    mass can never act as a source. Sink absorption is free; obstacle
    absorption is a collision current and is penalized. Without any
    absorbing rows the mean defect of m is structurally unreachable and
    the solve falls back to mean deflation with the residual-floor check.

    Returns a dict with the cone solution or an equality-infeasibility
    certificate.
    """
    n = m_vec.size
    k_cone = cone_cols.shape[1]
    if drop_cols is None:
        drop_cols = np.zeros(k_cone, dtype=bool)
    keep_cols = ~drop_cols
    cols = cone_cols[:, keep_cols]
    hz = hz_coeffs[keep_cols]
    k_active = cols.shape[1]
    if blocked_rows is None:
        blocked_rows = np.zeros(n, dtype=bool)
    absorbing = blocked_rows.copy()
    if free_rows is not None:
        absorbing |= free_rows
    deflate = not absorbing.any()
    enforced = ~absorbing
    if deflate:
        floor = abs(float(np.mean(m_vec)))
        if floor > tol_eq:
            return {"infeasible_residual": _min_residual_lp(cols, m_vec)}
        m_defl = m_vec - np.mean(m_vec)

    eps_reg = 1e-8 * (1.0 + float(np.max(np.abs(hz_coeffs))))
    slack_pen = 1e4 * (1.0 + float(np.max(np.abs(hz_coeffs))))
    absorb_idx = np.nonzero(absorbing)[0]
    n_absorb = absorb_idx.size

    def assemble(with_slack):
        blocks = [cols]
        costs = [np.full(k_active, eps_reg)]
        bounds = [(0.0, None)] * k_active
        if n_absorb:
            a_cols = np.zeros((n, n_absorb))
            a_cols[absorb_idx, np.arange(n_absorb)] = 1.0
            blocks.append(a_cols)
            costs.append(np.where(blocked_rows[absorb_idx], blocked_penalty, 0.0))
            bounds += [(0.0, None)] * n_absorb
        if with_slack:
            n_enf = int(np.count_nonzero(enforced))
            s_cols = np.zeros((n, n_enf))
            s_cols[np.nonzero(enforced)[0], np.arange(n_enf)] = 1.0
            blocks += [s_cols, -s_cols]
            costs.append(np.full(2 * n_enf, slack_pen))
            bounds += [(0.0, tol_eq)] * (2 * n_enf)
        rows = np.hstack(blocks)
        if deflate:
            rows = rows[: n - 1]
            b_eq = (m_vec if with_slack else m_defl)[: n - 1]
        else:
            b_eq = m_vec
        width = rows.shape[0], rows.shape[1]
        # hazard cap row: hz . x - t + s_h = 0
        hrow = np.concatenate([hz, np.zeros(rows.shape[1] - k_active), [-1.0, 1.0]])
        a_full = np.vstack([np.hstack([rows, np.zeros((rows.shape[0], 2))]), hrow])
        b_full = np.concatenate([b_eq, [0.0]])
        c = np.concatenate(costs + [[1.0, 0.0]])  # t then s_h
        bounds += [(0.0, None), (0.0, None)]
        return c, a_full, b_full, bounds

    used_fallback = False
    c, a_full, b_full, bounds = assemble(with_slack=False)
    res = lp_solve(c, a_full, b_full, bounds, tol=lp_tol, max_iter=300)
    if not res.optimal:
        used_fallback = True
        c, a_full, b_full, bounds = assemble(with_slack=True)
        res = lp_solve(c, a_full, b_full, bounds, tol=lp_tol, max_iter=300)
        if not res.optimal:
            t_star = _min_residual_lp(cols[enforced], m_vec[enforced])
            return {"infeasible_residual": t_star, "used_fallback": True}
    x_cone = np.zeros(k_cone)
    x_cone[keep_cols] = res.x[:k_active]
    absorbed = res.x[k_active : k_active + n_absorb]
    blocked_flux = float(np.sum(absorbed[blocked_rows[absorb_idx]])) if n_absorb else 0.0
    return {
        "x": x_cone,
        "t": float(res.x[-2]),
        "iterations": res.iterations,
        "used_fallback": used_fallback,
        "enforced": enforced,
        "blocked_flux": blocked_flux,
    }


def synthesize(problem, lp_tol=1e-9):
    """Solve the synthesis problem: minimize the certified hazard mass.

    The hazard feasibility constraint u.D v <= gamma is recast as
    minimization of t >= max(0, u.D v) subject to the equality restricted
    to the enforced rows and the cones v >= 0, |w| <= M v via the change
    of variables a = M v + w, b = M v - w. A tiny l1 regularizer on (a, b)
    breaks degeneracy toward minimal-mass densities. Feasible iff the
    attained minimum is at most gamma.
    """
    n = problem.size
    mbound = problem.input_bound
    huv = _hazard_costs(problem.d, problem.u)
    cone_cols = np.hstack(
        [
            -problem.m0 / (2.0 * mbound) - problem.m1 / 2.0,
            -problem.m0 / (2.0 * mbound) + problem.m1 / 2.0,
        ]
    )
    hz = np.concatenate([huv / (2.0 * mbound), huv / (2.0 * mbound)])
    drop = None
    if problem.free_rows is not None:
        drop = np.concatenate([problem.free_rows, problem.free_rows])
    core = _solve_hazard_lp(
        cone_cols, problem.m, problem.free_rows, problem.equality_tol, hz, lp_tol,
        drop_cols=drop,
    )
    if "infeasible_residual" in core:
        return SynthesisOutcome(
            status="equality_infeasible",
            max_residual=core["infeasible_residual"],
            used_fallback=core.get("used_fallback", False),
        )
    av, bv = core["x"][:n], core["x"][n:]
    v = (av + bv) / (2.0 * mbound)
    w = (av - bv) / 2.0
    resid = (-problem.m0 @ v - problem.m1 @ w - problem.m)[core["enforced"]]
    pair = DensityPair(
        v=v,
        w=w,
        residual_eq=float(np.max(np.abs(resid))) if resid.size else 0.0,
        hazard_value=float(huv @ v),
    )
    status = "feasible" if pair.hazard_value <= problem.gamma + 1e-9 else "gamma_infeasible"
    return SynthesisOutcome(
        status=status,
        pair=pair,
        best_gamma=max(core["t"], 0.0),
        lp_iterations=core["iterations"],
        used_fallback=core["used_fallback"],
    )


def verify_autonomous(m0, m, d, u, gamma, equality_tol=None, free_rows=None, lp_tol=1e-9):
    """Safety verification for an autonomous field: synthesis with w = 0."""
    m0 = np.asarray(m0, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n = m.size
    if free_rows is not None:
        free_rows = np.asarray(free_rows, dtype=bool)
        if not free_rows.any():
            free_rows = None
    if equality_tol is None:
        equality_tol = (
            1e-6 * float(np.max(np.abs(m))) * n if free_rows is not None else default_equality_tol(m)
        )
    huv = _hazard_costs(d, u)
    core = _solve_hazard_lp(-m0, m, free_rows, equality_tol, huv, lp_tol, drop_cols=free_rows)
    if "infeasible_residual" in core:
        return SynthesisOutcome(
            status="equality_infeasible",
            max_residual=core["infeasible_residual"],
            used_fallback=core.get("used_fallback", False),
        )
    v = core["x"]
    resid = (-m0 @ v - m)[core["enforced"]]
    pair = DensityPair(
        v=v,
        w=np.zeros(n),
        residual_eq=float(np.max(np.abs(resid))) if resid.size else 0.0,
        hazard_value=float(huv @ v),
    )
    status = "feasible" if pair.hazard_value <= gamma + 1e-9 else "gamma_infeasible"
    return SynthesisOutcome(
        status=status,
        pair=pair,
        best_gamma=max(core["t"], 0.0),
        lp_iterations=core["iterations"],
        used_fallback=core["used_fallback"],
    )


def residual_report(problem, pair):
    """Recompute solution diagnostics; pure function of its inputs."""
    eq = -problem.m0 @ pair.v - problem.m1 @ pair.w - problem.m
    bound_gap = np.abs(pair.w) - problem.input_bound * pair.v
    return {
        "residual_eq": float(np.max(np.abs(eq))) if eq.size else 0.0,
        "hazard_value": float(_hazard_costs(problem.d, problem.u) @ pair.v),
        "min_v": float(pair.v.min()) if pair.v.size else 0.0,
        "max_bound_violation": float(max(bound_gap.max(), 0.0)) if bound_gap.size else 0.0,
    }
