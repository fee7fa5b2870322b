"""NumPy implementations of the hot kernels.

Semantics here are the reference; the compiled extension in
``_kernels_cy.pyx`` mirrors them loop-for-loop. Keep the two in sync.
"""

import numpy as np

BACKEND = "python"


def rbf_eval(points, centers, sigma):
    """Evaluate Gaussian RBFs exp(-|x-c|^2 / (2 sigma^2)).

    points: (P, n), centers: (N, n). Returns (P, N) with entries in (0, 1].
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    # |p - c|^2 = |p|^2 + |c|^2 - 2 p.c, computed via GEMM
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centers, centers)
    sq = p2[:, None] + c2[None, :] - 2.0 * (points @ centers.T)
    np.maximum(sq, 0.0, out=sq)
    sq *= -1.0 / (2.0 * sigma * sigma)
    return np.exp(sq, out=sq)


def project_rows_simplex(mat):
    """Euclidean projection of each row onto {z >= 0, sum z = 1}."""
    v = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    r, n = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, n + 1, dtype=np.float64)
    cond = u + (1.0 - css) / j > 0.0
    # cond is True on a prefix; find the last True index per row
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    lam = (1.0 - css[np.arange(r), rho]) / (rho + 1.0)
    out = v + lam[:, None]
    np.maximum(out, 0.0, out=out)
    return out


def simulate_closed_loop(
    a,
    b,
    c,
    centers,
    sigma,
    v,
    w,
    gain,
    x_r,
    eps_l,
    input_bound,
    denom_floor,
    x0s,
    dt,
    max_steps,
    lo,
    hi,
    stop_at_target,
):
    """Closed-loop RK4 for the planar drift family with the density controller.

    Drift is f(x) = (a + b*cos(0.5 x1) + c*sin(0.5 x2), 0) with input channel
    g = (0, 1). Control at a state x:

      inside the eps_l ball around x_r  ->  -gain.(x - x_r)
      elif Psi(x).v >= denom_floor      ->  Psi(x).w / Psi(x).v
      else                              ->  0

    always clamped to [-input_bound, input_bound]. Control is re-evaluated at
    every RK4 stage. Integration of a trajectory stops when it enters the
    target ball (if stop_at_target), or leaves the [lo, hi] box.

    x0s: (B, 2) initial states integrated in lockstep.

    Returns (states (B, K, 2), inputs (B, K), n_valid (B,), status (B,)) with
    K = max_steps + 1. Rows beyond n_valid repeat the final real state.
    Status: 0 full horizon, 1 stopped at target, 2 left the domain.
    """
    centers = np.asarray(centers, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    x_r = np.asarray(x_r, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=np.float64))
    bsz = x0s.shape[0]
    k_total = max_steps + 1

    states = np.empty((bsz, k_total, 2))
    inputs = np.empty((bsz, k_total))
    n_valid = np.full(bsz, k_total, dtype=np.int64)
    status = np.zeros(bsz, dtype=np.int8)
    eps2 = eps_l * eps_l

    def control(x):
        diff = x - x_r
        in_ball = np.einsum("ij,ij->i", diff, diff) <= eps2
        psi = rbf_eval(x, centers, sigma)
        rho = psi @ v
        rbar = psi @ w
        u = np.zeros(bsz)
        ok = rho >= denom_floor
        np.divide(rbar, rho, out=u, where=ok)
        u[~ok] = 0.0
        np.copyto(u, -(diff @ gain), where=in_ball)
        return np.clip(u, -input_bound, input_bound)

    def drift1(x):
        return a + b * np.cos(0.5 * x[:, 0]) + c * np.sin(0.5 * x[:, 1])

    def stage(x, u):
        return np.column_stack([drift1(x), u])

    x = x0s.copy()
    active = np.ones(bsz, dtype=bool)
    u_rec = control(x)
    for k in range(k_total):
        states[:, k] = x
        inputs[:, k] = u_rec
        newly = active.copy()
        if stop_at_target:
            d = x - x_r
            hit = newly & (np.einsum("ij,ij->i", d, d) <= eps2)
            status[hit] = 1
            n_valid[hit] = k + 1
            active &= ~hit
            newly = active.copy()
        out = newly & ~np.all((x >= lo) & (x <= hi), axis=1)
        status[out] = 2
        n_valid[out] = k + 1
        active &= ~out
        if k == k_total - 1 or not active.any():
            if k < k_total - 1:
                states[:, k + 1 :] = x[:, None, :]
                inputs[:, k + 1 :] = u_rec[:, None]
            break
        f1 = stage(x, u_rec)
        x2 = x + (0.5 * dt) * f1
        f2 = stage(x2, control(x2))
        x3 = x + (0.5 * dt) * f2
        f3 = stage(x3, control(x3))
        x4 = x + dt * f3
        f4 = stage(x4, control(x4))
        x_new = x + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        x = np.where(active[:, None], x_new, x)
        u_rec = np.where(active, control(x), u_rec)
    # pad frozen rows with their final real state
    for jj in np.nonzero(n_valid < k_total)[0]:
        kv = n_valid[jj]
        states[jj, kv:] = states[jj, kv - 1]
        inputs[jj, kv:] = inputs[jj, kv - 1]
    return states, inputs, n_valid, status
