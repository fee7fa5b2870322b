"""Density feedback controller with local LQR handoff.

The navigation law is k(x) = Psi(x).w / Psi(x).v, saturated at the input
bound; inside the handoff ball X_L around the target the linear LQR law
takes over. The continuous algebraic Riccati equation behind the LQR gain
is solved by Kleinman-Newton iteration from a stabilizing seed.
"""

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import kernels, matio
from .basis import RbfBasis, ball_region
from .dynamics import Trajectory, VectorField, simulate
from .errors import PfnavError, SolverError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NavigationController:
    basis: RbfBasis
    v: np.ndarray
    w: np.ndarray
    input_bound: float
    x_r: np.ndarray
    epsilon_l: float
    lqr_gain: np.ndarray
    denom_floor: float

    @classmethod
    def build(cls, basis, pair, input_bound, x_r, epsilon_l, lqr_gain, denom_floor=None):
        v = np.asarray(pair.v, dtype=np.float64)
        if denom_floor is None:
            # below this density the rational law is numerically meaningless
            denom_floor = 1e-8 * max(float(v.max()), 1e-300)
        return cls(
            basis=basis,
            v=v,
            w=np.asarray(pair.w, dtype=np.float64),
            input_bound=float(input_bound),
            x_r=np.asarray(x_r, dtype=np.float64),
            epsilon_l=float(epsilon_l),
            lqr_gain=np.asarray(lqr_gain, dtype=np.float64),
            denom_floor=float(denom_floor),
        )

    def control(self, x):
        """Scalar feedback input at one state; always within the bound."""
        x = np.asarray(x, dtype=np.float64)
        diff = x - self.x_r
        if float(diff @ diff) <= self.epsilon_l**2:
            u = -float(self.lqr_gain @ diff)
        else:
            psi = self.basis.eval(x)
            rho = float(psi @ self.v)
            if rho >= self.denom_floor:
                u = float(psi @ self.w) / rho
            else:
                log.warning("density %.3e below floor at %s; output 0", rho, x)
                u = 0.0
        return float(np.clip(u, -self.input_bound, self.input_bound))

    def save(self, outdir):
        os.makedirs(outdir, exist_ok=True)
        matio.save_matrix(os.path.join(outdir, "centers.mat"), self.basis.centers)
        matio.save_vector(os.path.join(outdir, "v.mat"), self.v)
        matio.save_vector(os.path.join(outdir, "w.mat"), self.w)
        matio.save_vector(os.path.join(outdir, "gain.mat"), self.lqr_gain)
        matio.save_meta(
            os.path.join(outdir, "meta.txt"),
            {
                "sigma": float(self.basis.sigma),
                "dim": self.basis.dim,
                "input_bound": self.input_bound,
                "epsilon_l": self.epsilon_l,
                "denom_floor": self.denom_floor,
                "x_r": self.x_r,
                "basis_hash": self.basis.content_hash(),
            },
        )

    @classmethod
    def load(cls, outdir):
        meta = matio.load_meta(os.path.join(outdir, "meta.txt"))
        centers = matio.load_matrix(os.path.join(outdir, "centers.mat"))
        basis = RbfBasis(centers=centers, sigma=float(meta["sigma"]), dim=int(meta["dim"]))
        return cls(
            basis=basis,
            v=matio.load_vector(os.path.join(outdir, "v.mat")),
            w=matio.load_vector(os.path.join(outdir, "w.mat")),
            input_bound=float(meta["input_bound"]),
            x_r=np.array([float(s) for s in meta["x_r"].split(",")]),
            epsilon_l=float(meta["epsilon_l"]),
            lqr_gain=matio.load_vector(os.path.join(outdir, "gain.mat")),
            denom_floor=float(meta["denom_floor"]),
        )


def linearize(field_f, field_g, x_r, step=1e-5):
    """A from central differences of f at x_r, B = g(x_r)."""
    x_r = np.asarray(x_r, dtype=np.float64)
    n = field_f.dim
    a = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        a[:, j] = (field_f.eval(x_r + e) - field_f.eval(x_r - e)) / (2.0 * step)
    b = field_g.eval(x_r)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise PfnavError("non-finite field evaluation while linearizing")
    return a, b.reshape(n, 1)


def solve_lyapunov(a, q):
    """Solve A^T P + P A = -Q via the Kronecker system (small dims only)."""
    n = a.shape[0]
    eye = np.eye(n)
    lhs = np.kron(eye, a.T) + np.kron(a.T, eye)
    p = np.linalg.solve(lhs, -q.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (p + p.T)


def _spectral_abscissa(mat):
    return float(np.max(np.linalg.eigvals(mat).real))


def lqr_gain(a, b, q=None, r=1.0, seed=0, max_iter=100, tol=1e-12):
    """LQR gain K = R^-1 B^T P with P from Kleinman-Newton iteration.

    The stabilizing seed is K = 0 when A is already Hurwitz, otherwise
    randomized gains of growing magnitude are tried (pole-shift attempts).
    Returns a length-dim gain row; the closed loop A - B K is verified
    Hurwitz.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    n = a.shape[0]
    b = np.asarray(b, dtype=np.float64).reshape(n, -1)
    nu = b.shape[1]
    q = np.eye(n) if q is None else np.atleast_2d(np.asarray(q, dtype=np.float64))
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    r_inv = np.linalg.inv(r)

    if _spectral_abscissa(a) < -1e-12:
        k = np.zeros((nu, n))
    else:
        rng = np.random.default_rng(seed)
        k = None
        for attempt in range(400):
            scale = 10.0 ** (attempt // 40 - 1)
            cand = scale * rng.standard_normal((nu, n))
            if _spectral_abscissa(a - b @ cand) < -1e-9:
                k = cand
                break
        if k is None:
            raise SolverError("unstabilizable pair (numerically)")

    p_prev = None
    for _ in range(max_iter):
        acl = a - b @ k
        p = solve_lyapunov(acl, q + k.T @ r @ k)
        k = r_inv @ b.T @ p
        if p_prev is not None and np.max(np.abs(p - p_prev)) <= tol * max(
            1.0, float(np.max(np.abs(p)))
        ):
            break
        p_prev = p
    k = np.asarray(r_inv @ b.T @ p)
    if _spectral_abscissa(a - b @ k) >= 0:
        raise SolverError("Kleinman iteration did not stabilize the pair")
    return k.reshape(-1) if nu == 1 else k


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Control-affine plant xdot = f(x) + g(x) u under a controller."""

    field_f: VectorField
    field_g: VectorField
    controller: NavigationController

    def as_field(self):
        ctrl = self.controller

        def fn(x):
            return self.field_f.eval(x) + self.field_g.eval(x) * ctrl.control(x)

        return VectorField(
            self.field_f.dim, fn, self.field_f.domain, name=self.field_f.name + "_cl"
        )

    def _kernel_args(self):
        fam = self.field_f.kernel_family
        if fam is None or fam[0] != "river2d":
            return None
        g0 = self.field_g.eval(np.zeros(2))
        if not (abs(g0[0]) < 1e-15 and abs(g0[1] - 1.0) < 1e-15):
            return None
        return fam[1:]

    def simulate(self, x0, t_final, dt, stop_at_target=False):
        """Closed-loop trajectory; uses the compiled path when available."""
        fam = self._kernel_args()
        if fam is None:
            stop = ball_region(self.controller.x_r, self.controller.epsilon_l)
            return _simulate_generic(self, x0, t_final, dt, stop if stop_at_target else None)
        a, b, c = fam
        ctrl = self.controller
        steps = math.ceil(t_final / dt)
        states, inputs, n_valid, status = kernels.simulate_closed_loop(
            a,
            b,
            c,
            ctrl.basis.centers,
            ctrl.basis.sigma,
            ctrl.v,
            ctrl.w,
            ctrl.lqr_gain,
            ctrl.x_r,
            ctrl.epsilon_l,
            ctrl.input_bound,
            ctrl.denom_floor,
            np.asarray(x0, dtype=np.float64)[None, :],
            dt,
            steps,
            self.field_f.domain.lo,
            self.field_f.domain.hi,
            bool(stop_at_target),
        )
        nv = int(n_valid[0])
        return Trajectory(
            times=dt * np.arange(nv),
            states=states[0, :nv],
            inputs=inputs[0, :nv],
            exited=bool(status[0] == 2),
            reached=bool(status[0] == 1),
        )

    def simulate_batch(self, x0s, t_final, dt, stop_at_target=False):
        """Lockstep batch of closed-loop trajectories (for Monte Carlo)."""
        fam = self._kernel_args()
        if fam is None:
            return [self.simulate(x0, t_final, dt, stop_at_target) for x0 in x0s]
        a, b, c = fam
        ctrl = self.controller
        steps = math.ceil(t_final / dt)
        states, inputs, n_valid, status = kernels.simulate_closed_loop(
            a,
            b,
            c,
            ctrl.basis.centers,
            ctrl.basis.sigma,
            ctrl.v,
            ctrl.w,
            ctrl.lqr_gain,
            ctrl.x_r,
            ctrl.epsilon_l,
            ctrl.input_bound,
            ctrl.denom_floor,
            np.atleast_2d(np.asarray(x0s, dtype=np.float64)),
            dt,
            steps,
            self.field_f.domain.lo,
            self.field_f.domain.hi,
            bool(stop_at_target),
        )
        out = []
        for j in range(states.shape[0]):
            nv = int(n_valid[j])
            out.append(
                Trajectory(
                    times=dt * np.arange(nv),
                    states=states[j, :nv],
                    inputs=inputs[j, :nv],
                    exited=bool(status[j] == 2),
                    reached=bool(status[j] == 1),
                )
            )
        return out


def _simulate_generic(system, x0, t_final, dt, stop_region):
    ctrl = system.controller
    field = system.as_field()
    traj = simulate(field, x0, t_final, dt, stop_region=stop_region)
    inputs = np.array([ctrl.control(s) for s in traj.states])
    return Trajectory(
        times=traj.times,
        states=traj.states,
        inputs=inputs,
        exited=traj.exited,
        reached=traj.reached,
    )
