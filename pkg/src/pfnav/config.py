"""Experiment configuration: schema, builtin scenarios, assembly.

Configs are JSON (trusted input; field expressions are evaluated).
``builtin_config`` ships the two reference scenarios; ``load_config``
accepts a file path or a builtin name. Validation errors carry the field
path that caused them.
"""

import copy
import hashlib
import json

import numpy as np

from .basis import (
    RbfBasis,
    ball_region,
    box_region,
    complement_region,
    implicit_region,
    intersection_region,
    union_region,
)
from .dynamics import Box, constant_field, example1_fields, example2_fields, expression_field
from .errors import SchemaError
from .safety import HazardModel, HazardPiece

_DEFAULTS = {
    "seed": 0,
    "dt": 0.01,
    "snapshot_dt": None,  # defaults to dt; larger steps resolve the generator better
    "gamma": 0.1,  # reference value used across the builtin scenarios
    "x0_exclude_hazard": False,
    "terminal": "regulate",
    "delta": None,
    "sink_margin": 3.0,
    "sink_region": None,
    "support_exclude": [],
    "equality_tol": None,
    "sigma": None,
    "sigma_factor": 0.4,
    "sim": {"t_final": 30.0, "n_trajectories": 10},
    "mc": {"horizon": 50.0, "n_samples": 200},
    "quadrature": {"mass_grid": 200, "project_grid": 150, "ridge": 1e-8, "volume_grid": 400},
    "lqr": {"q": 1.0, "r": 1.0},
    "full_scale": {"basis": [50, 50], "snapshots": [100, 100]},
}


def builtin_config(name):
    if name == "example1":
        return {
            "name": "example1",
            "seed": 1001,
            "dynamics": "example1",
            "basis": {"grid": [25, 25], "sigma_factor": 0.4},
            "dt": 0.01,
            "snapshot_dt": 0.15,
            "snapshots": {"kind": "grid", "dims": [50, 50]},
            "x0_region": {"kind": "box", "lo": [0.0, 5.0], "hi": [1.0, 7.0]},
            "x0_exclude_hazard": True,
            "x_r": [9.7, 3.8],
            "epsilon_l": 0.25,
            "terminal": "stop",
            "gamma": 0.1,
            "input_bound": 3.0,
            "hazard": [
                {
                    "region": {
                        "kind": "implicit",
                        "expr": "(2*sin(x1)+6-x2)*(x2-2*sin(x1)-4)",
                    },
                    "mode": "uniform",
                    "level": 1.0,
                }
            ],
            "sim": {"t_final": 30.0, "n_trajectories": 10},
            "mc": {"horizon": 30.0, "n_samples": 200},
        }
    if name == "example2":
        return _example2_config(0.8, 0.2)
    raise SchemaError("dynamics", f"unknown builtin scenario {name!r}")


def _example2_config(mu1, mu2):
    """Scenario with two inner obstacle boxes holding measures mu1 and mu2.

    Uniform-normalized pieces place density mu/area on each box; the outer
    piece is the deterministic complement of the feasible block with raw
    intensity one.
    """
    return {
        "name": f"example2_{mu1:g}_{mu2:g}",
        "seed": 2002,
        "dynamics": "example2",
        "basis": {"grid": [25, 25], "sigma_factor": 0.4},
        "dt": 0.01,
        "snapshot_dt": [1.0, 0.25],
        "snapshots": {"kind": "grid", "dims": [50, 50]},
        "x0_region": {"kind": "box", "lo": [5.3, -0.7], "hi": [6.7, 0.7]},
        "x0_exclude_hazard": False,
        "x_r": [0.0, 0.0],
        "epsilon_l": 0.5,
        "terminal": "regulate",
        "gamma": 0.1,
        "input_bound": 1.0,
        "hazard": [
            {
                "region": {
                    "kind": "complement",
                    "of": {"kind": "box", "lo": [-1.0, -3.0], "hi": [7.0, 3.0]},
                },
                "mode": "raw",
                "level": 1.0,
            },
            {
                "region": {"kind": "box", "lo": [2.0, -3.0], "hi": [4.0, 0.0]},
                "mode": "uniform",
                "level": mu1,
            },
            {
                "region": {"kind": "box", "lo": [2.0, 0.0], "hi": [4.0, 3.0]},
                "mode": "uniform",
                "level": mu2,
            },
        ],
        "sim": {"t_final": 50.0, "n_trajectories": 10},
        "mc": {"horizon": 50.0, "n_samples": 200},
    }


def example2_config(mu1, mu2):
    return validate_config(_example2_config(mu1, mu2))


def load_config(path_or_name):
    if path_or_name in ("example1", "example2"):
        return validate_config(builtin_config(path_or_name))
    with open(path_or_name, encoding="utf-8") as fh:
        return validate_config(json.load(fh))


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _need(cfg, key, path=""):
    if key not in cfg:
        raise SchemaError(f"{path}{key}", "required field is missing")
    return cfg[key]


def _as_number(val, path, minimum=None, positive=False):
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise SchemaError(path, f"expected a number, got {type(val).__name__}")
    if positive and val <= 0:
        raise SchemaError(path, "must be positive")
    if minimum is not None and val < minimum:
        raise SchemaError(path, f"must be >= {minimum}")
    return float(val)


def _as_int(val, path, minimum=1):
    if not isinstance(val, int) or isinstance(val, bool):
        raise SchemaError(path, f"expected an integer, got {type(val).__name__}")
    if val < minimum:
        raise SchemaError(path, f"must be >= {minimum}")
    return val


def _as_vector(val, path, length=None):
    if not isinstance(val, (list, tuple)) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in val
    ):
        raise SchemaError(path, "expected a list of numbers")
    if length is not None and len(val) != length:
        raise SchemaError(path, f"expected length {length}, got {len(val)}")
    return [float(v) for v in val]


_REGION_KINDS = ("box", "ball", "implicit", "complement", "union", "intersection")


def _validate_region(spec, path):
    if not isinstance(spec, dict):
        raise SchemaError(path, "expected a region object")
    kind = _need(spec, "kind", path + ".")
    if kind not in _REGION_KINDS:
        raise SchemaError(f"{path}.kind", f"unknown kind {kind!r}; one of {_REGION_KINDS}")
    if kind == "box":
        lo = _as_vector(_need(spec, "lo", path + "."), f"{path}.lo")
        hi = _as_vector(_need(spec, "hi", path + "."), f"{path}.hi", length=len(lo))
        if any(h <= l for l, h in zip(lo, hi)):
            raise SchemaError(path, "box needs lo < hi per axis")
    elif kind == "ball":
        _as_vector(_need(spec, "center", path + "."), f"{path}.center")
        _as_number(_need(spec, "radius", path + "."), f"{path}.radius", positive=True)
    elif kind == "implicit":
        expr = _need(spec, "expr", path + ".")
        if not isinstance(expr, str):
            raise SchemaError(f"{path}.expr", "expected an expression string")
    elif kind == "complement":
        _validate_region(_need(spec, "of", path + "."), f"{path}.of")
    else:
        parts = _need(spec, "of", path + ".")
        if not isinstance(parts, list) or not parts:
            raise SchemaError(f"{path}.of", "expected a nonempty list of regions")
        for i, part in enumerate(parts):
            _validate_region(part, f"{path}.of[{i}]")
    return spec


def region_from_spec(spec):
    kind = spec["kind"]
    if kind == "box":
        return box_region(spec["lo"], spec["hi"])
    if kind == "ball":
        return ball_region(spec["center"], spec["radius"])
    if kind == "implicit":
        return implicit_region(spec["expr"])
    if kind == "complement":
        return complement_region(region_from_spec(spec["of"]))
    parts = [region_from_spec(s) for s in spec["of"]]
    return union_region(*parts) if kind == "union" else intersection_region(*parts)


def validate_config(cfg):
    """Normalize and validate; returns a deep copy with defaults filled."""
    if not isinstance(cfg, dict):
        raise SchemaError("", "config must be an object")
    out = copy.deepcopy(cfg)
    for key, val in _DEFAULTS.items():
        if isinstance(val, dict):
            merged = copy.deepcopy(val)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, val)

    dyn = _need(out, "dynamics")
    if isinstance(dyn, str):
        if dyn not in ("example1", "example2"):
            raise SchemaError("dynamics", f"unknown builtin {dyn!r}")
    elif isinstance(dyn, dict):
        dom = _need(dyn, "domain", "dynamics.")
        lo = _as_vector(_need(dom, "lo", "dynamics.domain."), "dynamics.domain.lo")
        _as_vector(_need(dom, "hi", "dynamics.domain."), "dynamics.domain.hi", length=len(lo))
        f = _need(dyn, "f", "dynamics.")
        if not isinstance(f, list) or len(f) != len(lo):
            raise SchemaError("dynamics.f", f"expected {len(lo)} expressions")
        g = _need(dyn, "g", "dynamics.")
        if not isinstance(g, list) or len(g) != len(lo):
            raise SchemaError("dynamics.g", f"expected length {len(lo)}")
    else:
        raise SchemaError("dynamics", "expected a builtin name or an object")

    basis = _need(out, "basis")
    dims = _as_vector(_need(basis, "grid", "basis."), "basis.grid")
    if any(int(d) != d or d < 1 for d in dims):
        raise SchemaError("basis.grid", "expected positive integers")
    if basis.get("sigma") is not None:
        _as_number(basis["sigma"], "basis.sigma", positive=True)
    basis.setdefault("sigma", None)
    basis.setdefault("sigma_factor", 0.4)

    _as_number(out["dt"], "dt", positive=True)
    snap_dt = out["snapshot_dt"]
    if snap_dt is None:
        out["snapshot_dt"] = [out["dt"], out["dt"]]
    elif isinstance(snap_dt, (int, float)) and not isinstance(snap_dt, bool):
        _as_number(snap_dt, "snapshot_dt", positive=True)
        out["snapshot_dt"] = [float(snap_dt), float(snap_dt)]
    else:
        vals = _as_vector(snap_dt, "snapshot_dt", length=2)
        if any(v <= 0 for v in vals):
            raise SchemaError("snapshot_dt", "steps must be positive")
        out["snapshot_dt"] = vals
    _as_number(out["gamma"], "gamma", minimum=0.0)
    _as_number(_need(out, "input_bound"), "input_bound", positive=True)
    _as_number(_need(out, "epsilon_l"), "epsilon_l", positive=True)
    if out["delta"] is not None:
        _as_number(out["delta"], "delta", positive=True)
    _as_number(out["sink_margin"], "sink_margin", minimum=0.0)
    if out["sink_region"] is not None:
        _validate_region(out["sink_region"], "sink_region")
    if not isinstance(out["support_exclude"], list):
        raise SchemaError("support_exclude", "expected a list of regions")
    for i, spec in enumerate(out["support_exclude"]):
        _validate_region(spec, f"support_exclude[{i}]")
    if out["equality_tol"] is not None:
        _as_number(out["equality_tol"], "equality_tol", positive=True)
    _as_vector(_need(out, "x_r"), "x_r")
    if out["terminal"] not in ("stop", "regulate"):
        raise SchemaError("terminal", "expected 'stop' or 'regulate'")

    snaps = _need(out, "snapshots")
    kind = _need(snaps, "kind", "snapshots.")
    if kind == "grid":
        _as_vector(_need(snaps, "dims", "snapshots."), "snapshots.dims")
    elif kind == "random":
        _as_int(_need(snaps, "count", "snapshots."), "snapshots.count")
    else:
        raise SchemaError("snapshots.kind", "expected 'grid' or 'random'")

    x0 = _need(out, "x0_region")
    _validate_region(x0, "x0_region")
    if x0["kind"] != "box":
        raise SchemaError("x0_region.kind", "initial set must be a box")

    hazard = out.setdefault("hazard", [])
    if not isinstance(hazard, list):
        raise SchemaError("hazard", "expected a list of pieces")
    for i, piece in enumerate(hazard):
        _validate_region(_need(piece, "region", f"hazard[{i}]."), f"hazard[{i}].region")
        mode = piece.setdefault("mode", "uniform")
        if mode not in ("uniform", "raw"):
            raise SchemaError(f"hazard[{i}].mode", "expected 'uniform' or 'raw'")
        _as_number(_need(piece, "level", f"hazard[{i}]."), f"hazard[{i}].level", minimum=0.0)

    _as_number(out["sim"].get("t_final", 30.0), "sim.t_final", positive=True)
    _as_int(out["sim"].get("n_trajectories", 10), "sim.n_trajectories")
    _as_number(out["mc"].get("horizon", 50.0), "mc.horizon", positive=True)
    _as_int(out["mc"].get("n_samples", 200), "mc.n_samples")
    quad = out["quadrature"]
    for key in ("mass_grid", "project_grid", "volume_grid"):
        _as_int(quad.get(key), f"quadrature.{key}")
    _as_number(quad.get("ridge"), "quadrature.ridge", minimum=0.0)
    _as_number(out["lqr"].get("q"), "lqr.q", positive=True)
    _as_number(out["lqr"].get("r"), "lqr.r", positive=True)
    _as_int(out["seed"], "seed", minimum=0)
    out.setdefault("name", "custom")
    return out


class Scenario:
    """Everything assembled from one validated config."""

    def __init__(self, cfg, full=False):
        cfg = validate_config(cfg)
        self.cfg = cfg
        self.name = cfg["name"]
        self.full = bool(full)
        self.hash = config_hash(cfg)
        self.seed = int(cfg["seed"])

        dyn = cfg["dynamics"]
        if dyn == "example1":
            self.f, self.g = example1_fields()
        elif dyn == "example2":
            self.f, self.g = example2_fields()
        else:
            domain = Box(dyn["domain"]["lo"], dyn["domain"]["hi"])
            self.f = expression_field(dyn["f"], domain, name="f")
            if all(isinstance(e, (int, float)) for e in dyn["g"]):
                self.g = constant_field([float(e) for e in dyn["g"]], domain, name="g")
            else:
                self.g = expression_field([str(e) for e in dyn["g"]], domain, name="g")
        self.domain = self.f.domain

        basis_dims = cfg["full_scale"]["basis"] if full else cfg["basis"]["grid"]
        self.basis = RbfBasis.grid(
            self.domain,
            [int(d) for d in basis_dims],
            sigma=cfg["basis"]["sigma"],
            sigma_factor=cfg["basis"]["sigma_factor"],
        )
        self.dt = float(cfg["dt"])
        snaps = dict(cfg["snapshots"])
        if full and snaps["kind"] == "grid":
            snaps["dims"] = cfg["full_scale"]["snapshots"]
        if snaps["kind"] == "random":
            snaps.setdefault("seed", self.seed + 3)
        self.sampling = snaps

        self.snapshot_dt_f, self.snapshot_dt_g = (float(v) for v in cfg["snapshot_dt"])
        self.x_r = np.asarray(cfg["x_r"], dtype=np.float64)
        self.epsilon_l = float(cfg["epsilon_l"])
        self.delta = float(cfg["delta"]) if cfg["delta"] is not None else self.epsilon_l
        self.sink_margin = float(cfg["sink_margin"])
        self.terminal = cfg["terminal"]
        self.gamma = float(cfg["gamma"])
        self.input_bound = float(cfg["input_bound"])
        self.equality_tol = cfg["equality_tol"]

        self.x0_box = Box(cfg["x0_region"]["lo"], cfg["x0_region"]["hi"])
        pieces = [
            HazardPiece(region_from_spec(p["region"]), float(p["level"]), p["mode"])
            for p in cfg["hazard"]
        ]
        self.hazard = HazardModel.build(
            pieces, self.domain, resolution=int(cfg["quadrature"]["volume_grid"])
        )
        self.hazard_union = (
            union_region(*[p.region for p in self.hazard.pieces]) if pieces else None
        )
        self.x0_exclude = self.hazard_union if cfg["x0_exclude_hazard"] else None

        self.sim_opts = cfg["sim"]
        self.mc_opts = cfg["mc"]
        self.quad = cfg["quadrature"]
        self.lqr_weights = cfg["lqr"]

    def x1_region(self):
        """Domain minus the delta neighborhood of the target."""
        return complement_region(ball_region(self.x_r, self.delta))

    def sink_rows(self):
        """Basis functions treated as the absorbing target neighborhood."""
        if self.cfg["sink_region"] is not None:
            region = region_from_spec(self.cfg["sink_region"])
            return region.contains(self.basis.centers)
        radius = self.delta + self.sink_margin * self.basis.sigma
        dist = np.linalg.norm(self.basis.centers - self.x_r, axis=1)
        return dist <= radius

    def excluded_rows(self):
        """Sink rows plus basis functions inside hard-excluded support.

        Deterministic obstacles are handled by support exclusion (the
        density is searched on their complement, reproducing the zero
        density the theory predicts there); probabilistic pieces stay in
        support and are priced through the hazard integral.
        """
        mask = self.sink_rows()
        for spec in self.cfg["support_exclude"]:
            mask = mask | region_from_spec(spec).contains(self.basis.centers)
        return mask

    def h0_function(self):
        """Uniform initial density on X0 (minus the excluded region)."""
        box = self.x0_box
        exclude = self.x0_exclude
        if exclude is None:
            value = 1.0 / box.volume()
        else:
            res = int(self.quad["volume_grid"])
            pts = box.grid([res] * box.dim)
            keep = ~exclude.contains(pts)
            frac = float(np.count_nonzero(keep)) / len(pts)
            if frac <= 0:
                raise SchemaError("x0_region", "initial box is entirely excluded")
            value = 1.0 / (frac * box.volume())

        def fn(points):
            pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
            inside = box.contains(pts)
            if exclude is not None:
                inside &= ~exclude.contains(pts)
            return value * inside

        return fn

    def project_grid_points(self):
        res = int(self.quad["project_grid"])
        return self.domain.grid([res] * self.domain.dim)
