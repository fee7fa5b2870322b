"""Vector fields, fixed-step RK4 integration, and snapshot generation.

All types are immutable after construction. The two builtin systems share
the planar drift family f(x) = (a + b*cos(0.5 x1) + c*sin(0.5 x2), 0) with
input channel g = (0, 1).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, SnapshotError
from .matio import save_csv


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi per axis")

    @property
    def dim(self):
        return self.lo.size

    def contains(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)

    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def sample(self, rng, n):
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def grid(self, dims, cell_centered=True):
        """Tensor grid of points, midpoint-of-cell placement by default."""
        dims = [int(d) for d in np.atleast_1d(dims)]
        if len(dims) != self.dim:
            raise ValueError(f"need {self.dim} grid dims, got {len(dims)}")
        axes = []
        for lo, hi, nd in zip(self.lo, self.hi, dims):
            if cell_centered:
                step = (hi - lo) / nd
                axes.append(lo + step * (np.arange(nd) + 0.5))
            else:
                axes.append(np.linspace(lo, hi, nd))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass(frozen=True)
class VectorField:
    """Deterministic vector field on an axis-aligned box domain.

    ``fn`` maps one state (dim,) to one velocity (dim,). ``kernel_family``
    tags fields eligible for the compiled closed-loop integrator.
    """

    dim: int
    fn: object
    domain: Box
    name: str = ""
    kernel_family: tuple = None

    def eval(self, x):
        out = np.asarray(self.fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        if out.shape != (self.dim,):
            raise ValueError(f"field {self.name!r} returned shape {out.shape}")
        return out


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray = None
    exited: bool = False
    reached: bool = False

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states length mismatch")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def to_csv(self, path):
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)]
        cols = [self.times] + [self.states[:, i] for i in range(n)]
        if self.inputs is not None:
            header.append("u")
            cols.append(self.inputs)
        save_csv(path, header, zip(*cols))


@dataclass(frozen=True)
class SnapshotSet:
    x_points: np.ndarray
    y_points: np.ndarray
    dt: float
    n_dropped: int = 0

    def __post_init__(self):
        if len(self.x_points) != len(self.y_points) or len(self.x_points) < 1:
            raise ValueError("need equal, nonempty snapshot lists")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def count(self):
        return len(self.x_points)


def river_drift(a, b, c, domain, name=""):
    """Drift family used by both builtin examples (x2 is the input axis)."""

    def fn(x):
        return np.array([a + b * math.cos(0.5 * x[0]) + c * math.sin(0.5 * x[1]), 0.0])

    return VectorField(2, fn, domain, name=name, kernel_family=("river2d", a, b, c))


def constant_field(vec, domain, name=""):
    vec = np.asarray(vec, dtype=np.float64)

    def fn(x):
        return vec.copy()

    return VectorField(vec.size, fn, domain, name=name)


def example1_fields():
    """River navigation system on [0, 10]^2."""
    box = Box([0.0, 0.0], [10.0, 10.0])
    f = river_drift(1.0, 0.125, -0.125, box, name="example1_f")
    g = constant_field([0.0, 1.0], box, name="example1_g")
    return f, g


def example2_fields():
    """Slow planar system on [-8, 8]^2 with an equilibrium at the origin."""
    box = Box([-8.0, -8.0], [8.0, 8.0])
    f = river_drift(-0.125, 0.125, -0.125, box, name="example2_f")
    g = constant_field([0.0, 1.0], box, name="example2_g")
    return f, g


_EXPR_NAMES = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "abs": abs,
    "pi": math.pi,
    "atan2": math.atan2,
    "tanh": math.tanh,
    "log": math.log,
}


def expression_field(exprs, domain, name="expr"):
    """Field from per-axis expressions in x1..xn (trusted input)."""
    dim = domain.dim
    if len(exprs) != dim:
        raise ValueError(f"need {dim} expressions, got {len(exprs)}")
    code = [compile(e, f"<{name}:{i}>", "eval") for i, e in enumerate(exprs)]

    def fn(x):
        ns = {f"x{i + 1}": float(x[i]) for i in range(dim)}
        ns.update(_EXPR_NAMES)
        ns["__builtins__"] = {}
        return np.array([eval(co, ns) for co in code], dtype=np.float64)

    return VectorField(dim, fn, domain, name=name)


def flow_step(field, x, dt):
    """One classical RK4 step of xdot = F(x); local error O(dt^5)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite initial state", state=x)
    k1 = field.eval(x)
    k2 = field.eval(x + 0.5 * dt * k1)
    k3 = field.eval(x + 0.5 * dt * k2)
    k4 = field.eval(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("field evaluation produced non-finite values", state=x)
    return out


def simulate(field, x0, t_final, dt, stop_region=None):
    """Integrate until t_final, domain exit, or entry into stop_region."""
    if dt > t_final:
        raise ValueError("dt must not exceed t_final")
    n_steps = math.ceil(t_final / dt)
    x = np.asarray(x0, dtype=np.float64)
    states = [x]
    exited = not bool(field.domain.contains(x)[0])
    reached = bool(stop_region is not None and stop_region.contains(x)[0])
    for _ in range(n_steps):
        if exited or reached:
            break
        x = flow_step(field, x, dt)
        states.append(x)
        if not field.domain.contains(x)[0]:
            exited = True
        elif stop_region is not None and stop_region.contains(x)[0]:
            reached = True
    states = np.array(states)
    times = dt * np.arange(len(states))
    return Trajectory(times=times, states=states, exited=exited, reached=reached)


def grid_sampling(dims):
    return {"kind": "grid", "dims": list(dims)}


def random_sampling(count, seed=0):
    return {"kind": "random", "count": int(count), "seed": int(seed)}


def generate_snapshots(field, sampling, dt):
    """Snapshot pairs y_i = flow(x_i, dt); pairs leaving the domain are dropped."""
    if sampling["kind"] == "grid":
        xs = field.domain.grid(sampling["dims"])
    elif sampling["kind"] == "random":
        rng = np.random.default_rng(sampling.get("seed", 0))
        xs = field.domain.sample(rng, sampling["count"])
    else:
        raise ValueError(f"unknown sampling kind {sampling['kind']!r}")
    keep_x, keep_y, dropped = [], [], 0
    for x in xs:
        y = flow_step(field, x, dt)
        if field.domain.contains(y)[0]:
            keep_x.append(x)
            keep_y.append(y)
        else:
            dropped += 1
    if not keep_x:
        raise SnapshotError("no valid snapshot pairs (all images left the domain)")
    return SnapshotSet(np.array(keep_x), np.array(keep_y), dt, n_dropped=dropped)
