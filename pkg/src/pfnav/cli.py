"""Command-line pipeline: snapshots -> operators -> synthesis -> controller
-> simulation -> evaluation, driven by one declarative config.

Every stage persists its artifacts under the output directory and reloads
them when rerun, so the subcommands can be used standalone or via
``pipeline``. All randomness flows from the config seed; two runs with the
same config produce byte-identical outputs.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import matio
from .basis import mass_matrix_d, project_density
from .config import Scenario, load_config
from .controller import ClosedLoopSystem, NavigationController, linearize, lqr_gain
from .dynamics import generate_snapshots, simulate, SnapshotSet
from .errors import PfnavError, SchemaError
from .operator import NsdmdOptions, OperatorApprox, nsdmd
from .safety import collision_probability_mc, occupancy_fraction, region_rejection_sampler
from .basis import ball_region
from .synthesis import DensityPair, SafetyProblem, residual_report, synthesize

log = logging.getLogger(__name__)


class StageError(PfnavError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class Runner:
    """Lazily computes pipeline stages, persisting artifacts as it goes."""

    def __init__(self, scenario, outdir):
        self.scn = scenario
        self.out = outdir
        os.makedirs(outdir, exist_ok=True)
        cfg_path = os.path.join(outdir, "config.json")
        blob = json.dumps(self.scn.cfg, sort_keys=True, indent=2)
        with open(cfg_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(blob + "\n")
        self._cache = {}

    def _dir(self, name):
        path = os.path.join(self.out, name)
        os.makedirs(path, exist_ok=True)
        return path

    # ---------------------------------------------------------------- stages

    def snapshots(self):
        if "snapshots" in self._cache:
            return self._cache["snapshots"]
        sdir = self._dir("snapshots")
        paths = {k: os.path.join(sdir, f"{k}.mat") for k in ("f_x", "f_y", "g_x", "g_y")}
        if all(os.path.exists(p) for p in paths.values()):
            fs = SnapshotSet(
                matio.load_matrix(paths["f_x"]),
                matio.load_matrix(paths["f_y"]),
                self.scn.snapshot_dt_f,
            )
            gs = SnapshotSet(
                matio.load_matrix(paths["g_x"]),
                matio.load_matrix(paths["g_y"]),
                self.scn.snapshot_dt_g,
            )
        else:
            log.info("generating snapshots (%s)", self.scn.sampling)
            fs = generate_snapshots(self.scn.f, self.scn.sampling, self.scn.snapshot_dt_f)
            gs = generate_snapshots(self.scn.g, self.scn.sampling, self.scn.snapshot_dt_g)
            matio.save_matrix(paths["f_x"], fs.x_points)
            matio.save_matrix(paths["f_y"], fs.y_points)
            matio.save_matrix(paths["g_x"], gs.x_points)
            matio.save_matrix(paths["g_y"], gs.y_points)
            matio.save_meta(
                os.path.join(sdir, "meta.txt"),
                {
                    "snapshot_dt_f": self.scn.snapshot_dt_f,
                    "snapshot_dt_g": self.scn.snapshot_dt_g,
                    "f_count": fs.count,
                    "f_dropped": fs.n_dropped,
                    "g_count": gs.count,
                    "g_dropped": gs.n_dropped,
                    "config_hash": self.scn.hash,
                },
            )
        self._cache["snapshots"] = (fs, gs)
        return fs, gs

    def operators(self):
        if "operators" in self._cache:
            return self._cache["operators"]
        odir = self._dir("operators")
        paths = {k: os.path.join(odir, f"{k}.mat") for k in ("p_hat_f", "p_hat_g")}
        if all(os.path.exists(p) for p in paths.values()):
            meta = matio.load_meta(os.path.join(odir, "meta.txt"))
            approx_f = OperatorApprox.from_p_hat(
                matio.load_matrix(paths["p_hat_f"]),
                self.scn.snapshot_dt_f,
                float(meta["f_objective"]),
            )
            approx_g = OperatorApprox.from_p_hat(
                matio.load_matrix(paths["p_hat_g"]),
                self.scn.snapshot_dt_g,
                float(meta["g_objective"]),
            )
        else:
            fs, gs = self.snapshots()
            opts = NsdmdOptions()
            log.info("NSDMD drift field (N=%d, M=%d)", self.scn.basis.size, fs.count)
            approx_f, rep_f = nsdmd(fs, self.scn.basis, opts)
            log.info(
                "drift done: %d iters, objective %.3e", rep_f.iterations, rep_f.objective
            )
            log.info("NSDMD input field (M=%d)", gs.count)
            approx_g, rep_g = nsdmd(gs, self.scn.basis, opts)
            log.info(
                "input done: %d iters, objective %.3e", rep_g.iterations, rep_g.objective
            )
            matio.save_matrix(paths["p_hat_f"], approx_f.p_hat)
            matio.save_matrix(paths["p_hat_g"], approx_g.p_hat)
            matio.save_matrix(os.path.join(odir, "m0.mat"), approx_f.m_gen)
            matio.save_matrix(os.path.join(odir, "m1.mat"), approx_g.m_gen)
            matio.save_meta(
                os.path.join(odir, "meta.txt"),
                {
                    "snapshot_dt_f": self.scn.snapshot_dt_f,
                    "snapshot_dt_g": self.scn.snapshot_dt_g,
                    "n_basis": self.scn.basis.size,
                    "basis_hash": self.scn.basis.content_hash(),
                    "config_hash": self.scn.hash,
                    "f_objective": rep_f.objective,
                    "f_iterations": rep_f.iterations,
                    "f_converged": rep_f.converged,
                    "f_constraint_violation": rep_f.constraint_violation,
                    "g_objective": rep_g.objective,
                    "g_iterations": rep_g.iterations,
                    "g_converged": rep_g.converged,
                    "g_constraint_violation": rep_g.constraint_violation,
                },
            )
        self._cache["operators"] = (approx_f, approx_g)
        return approx_f, approx_g

    def problem(self):
        if "problem" in self._cache:
            return self._cache["problem"]
        pdir = self._dir("problem")
        paths = {k: os.path.join(pdir, f"{k}.mat") for k in ("d", "m", "u")}
        approx_f, approx_g = self.operators()
        if all(os.path.exists(p) for p in paths.values()):
            d = matio.load_matrix(paths["d"])
            m_coef = matio.load_vector(paths["m"])
            u_coef = matio.load_vector(paths["u"])
        else:
            scn = self.scn
            log.info("assembling problem data (D, m, u)")
            d = mass_matrix_d(
                scn.basis, scn.x1_region(), scn.domain, resolution=int(scn.quad["mass_grid"])
            )
            grid = scn.project_grid_points()
            ridge = float(scn.quad["ridge"])
            h0 = project_density(scn.basis, scn.h0_function(), grid, ridge=ridge, role="initial")
            hazard_fn = scn.hazard.as_function()
            u_fit = project_density(scn.basis, hazard_fn, grid, ridge=ridge, role="hazard")
            m_coef, u_coef = h0.coef, u_fit.coef
            matio.save_matrix(paths["d"], d)
            matio.save_vector(paths["m"], m_coef)
            matio.save_vector(paths["u"], u_coef)
            matio.save_meta(
                os.path.join(pdir, "meta.txt"),
                {
                    "h0_fit_residual": h0.fit_residual,
                    "hazard_fit_residual": u_fit.fit_residual,
                    "gamma": self.scn.gamma,
                    "input_bound": self.scn.input_bound,
                    "config_hash": self.scn.hash,
                },
            )
        problem = SafetyProblem(
            m0=approx_f.m_gen,
            m1=approx_g.m_gen,
            m=m_coef,
            d=d,
            u=u_coef,
            gamma=self.scn.gamma,
            input_bound=self.scn.input_bound,
            equality_tol=self.scn.equality_tol,
            free_rows=self.scn.excluded_rows(),
        )
        self._cache["problem"] = problem
        return problem

    def solution(self):
        if "solution" in self._cache:
            return self._cache["solution"]
        sdir = self._dir("solution")
        vpath, wpath = os.path.join(sdir, "v.mat"), os.path.join(sdir, "w.mat")
        problem = self.problem()
        if os.path.exists(vpath) and os.path.exists(wpath):
            meta = matio.load_meta(os.path.join(sdir, "meta.txt"))
            pair = DensityPair(
                v=matio.load_vector(vpath),
                w=matio.load_vector(wpath),
                residual_eq=float(meta["residual_eq"]),
                hazard_value=float(meta["hazard_value"]),
            )
            from .synthesis import SynthesisOutcome

            outcome = SynthesisOutcome(
                status=meta["status"],
                pair=pair,
                best_gamma=float(meta["best_gamma"]),
            )
        else:
            log.info("solving synthesis LP (N=%d)", problem.size)
            outcome = synthesize(problem)
            if outcome.pair is not None:
                matio.save_vector(vpath, outcome.pair.v)
                matio.save_vector(wpath, outcome.pair.w)
            matio.save_meta(
                os.path.join(sdir, "meta.txt"),
                {
                    "status": outcome.status,
                    "best_gamma": -1.0 if outcome.best_gamma is None else outcome.best_gamma,
                    "max_residual": -1.0 if outcome.max_residual is None else outcome.max_residual,
                    "residual_eq": 0.0 if outcome.pair is None else outcome.pair.residual_eq,
                    "hazard_value": 0.0 if outcome.pair is None else outcome.pair.hazard_value,
                    "equality_tol": problem.equality_tol,
                    "lp_iterations": outcome.lp_iterations,
                    "used_fallback": outcome.used_fallback,
                    "config_hash": self.scn.hash,
                },
            )
        self._cache["solution"] = outcome
        return outcome

    def controller(self):
        if "controller" in self._cache:
            return self._cache["controller"]
        cdir = os.path.join(self.out, "controller")
        if os.path.exists(os.path.join(cdir, "meta.txt")):
            ctrl = NavigationController.load(cdir)
        else:
            outcome = self.solution()
            if not outcome.feasible:
                raise StageError(
                    "controller",
                    f"synthesis was {outcome.status}; no controller to build",
                )
            scn = self.scn
            a, b = linearize(scn.f, scn.g, scn.x_r)
            gain = lqr_gain(
                a,
                b,
                q=float(scn.lqr_weights["q"]) * np.eye(scn.f.dim),
                r=float(scn.lqr_weights["r"]),
                seed=scn.seed,
            )
            ctrl = NavigationController.build(
                scn.basis,
                outcome.pair,
                scn.input_bound,
                scn.x_r,
                scn.epsilon_l,
                gain,
            )
            ctrl.save(cdir)
            with open(
                os.path.join(cdir, "meta.txt"), "a", encoding="utf-8", newline="\n"
            ) as fh:
                fh.write(f"config_hash={self.scn.hash}\n")
        self._cache["controller"] = ctrl
        return ctrl

    def closed_loop(self):
        return ClosedLoopSystem(self.scn.f, self.scn.g, self.controller())

    def _x0_samples(self, n, seed):
        sampler = region_rejection_sampler(self.scn.x0_box, exclude=self.scn.x0_exclude)
        return [
            sampler(np.random.default_rng(s))
            for s in np.random.SeedSequence(seed).spawn(n)
        ]

    def trajectories(self):
        if "trajectories" in self._cache:
            return self._cache["trajectories"]
        tdir = self._dir("trajectories")
        scn = self.scn
        n = int(scn.sim_opts["n_trajectories"])
        t_final = float(scn.sim_opts["t_final"])
        x0s = self._x0_samples(n, scn.seed + 2)
        system = self.closed_loop()
        closed = system.simulate_batch(
            x0s, t_final, scn.dt, stop_at_target=(scn.terminal == "stop")
        )
        opened = [simulate(scn.f, x0, t_final, scn.dt) for x0 in x0s]
        rows = []
        for j, (ct, ot) in enumerate(zip(closed, opened)):
            ct.to_csv(os.path.join(tdir, f"closed_{j:03d}.csv"))
            ot.to_csv(os.path.join(tdir, f"open_{j:03d}.csv"))
            occ_c = (
                occupancy_fraction(ct, scn.hazard_union) if scn.hazard_union else 0.0
            )
            occ_o = (
                occupancy_fraction(ot, scn.hazard_union) if scn.hazard_union else 0.0
            )
            rows.append((j, ct.reached, ct.exited, occ_c, occ_o))
        matio.save_csv(
            os.path.join(tdir, "summary.csv"),
            ["index", "closed_reached", "closed_exited", "closed_occupancy", "open_occupancy"],
            rows,
            fmt="%.15g",
        )
        self._cache["trajectories"] = (closed, opened)
        return closed, opened

    def mc_eval(self):
        scn = self.scn
        ctrl = self.controller()
        if ctrl.basis.content_hash() != scn.basis.content_hash():
            raise StageError("eval", "controller bundle basis does not match the config basis")
        problem = self.problem()
        outcome = self.solution()
        system = self.closed_loop()
        sampler = region_rejection_sampler(scn.x0_box, exclude=scn.x0_exclude)
        report = collision_probability_mc(
            system,
            sampler,
            scn.hazard,
            float(scn.mc_opts["horizon"]),
            scn.dt,
            int(scn.mc_opts["n_samples"]),
            scn.seed + 1,
            stop_region=ball_region(scn.x_r, scn.epsilon_l),
        )
        bound = float((problem.d.T @ problem.u) @ outcome.pair.v)
        mdir = self._dir("mc")
        matio.save_meta(
            os.path.join(mdir, "report.txt"),
            {
                "estimate": report.estimate,
                "stderr": report.stderr,
                "tail_fraction": report.tail_fraction,
                "n_samples": report.n_samples,
                "horizon": report.horizon,
                "dt": scn.dt,
                "hazard_bound_utdv": bound,
                "gamma": scn.gamma,
                "config_hash": scn.hash,
            },
        )
        print(
            f"mc_estimate={report.estimate:.6g} stderr={report.stderr:.3g} "
            f"bound_utdv={bound:.6g} gamma={scn.gamma:g} tail={report.tail_fraction:.3g}"
        )
        return report

    def density_grid(self, resolution=100):
        outcome = self.solution()
        if outcome.pair is None:
            raise StageError("density-grid", "no density available (synthesis failed)")
        scn = self.scn
        pts = scn.domain.grid([resolution] * scn.domain.dim)
        rho = scn.basis.eval_many(pts) @ outcome.pair.v
        path = os.path.join(self.out, "density_grid.csv")
        header = [f"x{i + 1}" for i in range(scn.domain.dim)] + ["rho"]
        matio.save_csv(path, header, np.column_stack([pts, rho]))
        return path

    def pipeline(self):
        self.snapshots()
        self.operators()
        self.problem()
        outcome = self.solution()
        if not outcome.feasible:
            return outcome
        self.controller()
        self.trajectories()
        self.density_grid()
        self.mc_eval()
        return outcome


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pfnav", description="density-based safe navigation pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("snapshots", "fit", "synthesize", "simulate", "eval", "density-grid", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="config file path or builtin name")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--full", action="store_true", help="full-scale basis and snapshots")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--best-gamma", action="store_true", help="print the attained minimum")
        if name == "density-grid":
            p.add_argument("--resolution", type=int, default=100)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
            cfg = dict(cfg)
        scn = Scenario(cfg, full=args.full)
        runner = Runner(scn, args.out)
        if args.command == "snapshots":
            runner.snapshots()
        elif args.command == "fit":
            runner.operators()
        elif args.command == "synthesize":
            outcome = runner.solution()
            if args.best_gamma and outcome.best_gamma is not None:
                print(f"best_gamma={outcome.best_gamma:.9g}")
            if not outcome.feasible:
                _print_infeasible(outcome)
                return 3
        elif args.command == "simulate":
            runner.trajectories()
        elif args.command == "eval":
            runner.mc_eval()
        elif args.command == "density-grid":
            runner.density_grid(resolution=args.resolution)
        else:
            outcome = runner.pipeline()
            if args.best_gamma and outcome.best_gamma is not None:
                print(f"best_gamma={outcome.best_gamma:.9g}")
            if not outcome.feasible:
                _print_infeasible(outcome)
                return 3
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PfnavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _print_infeasible(outcome):
    if outcome.status == "gamma_infeasible":
        print(f"infeasible: tightest achievable gamma is {outcome.best_gamma:.9g}")
    else:
        print(
            "infeasible: equality system inconsistent, minimal max-norm residual "
            f"{outcome.max_residual:.9g}"
        )


if __name__ == "__main__":
    sys.exit(main())
