"""Probabilistic unsafe-set model and Monte-Carlo collision estimation.

The hazard intensity p(x) is a sum of pieces, each a region with either a
raw level (p equals the level on the region) or a uniform-normalized level
(p equals level / volume, so ``level`` is the total measure assigned to
the region and the classic deterministic unsafe set is level = 1). p need
not integrate to one; it is a nonnegative intensity.
"""

import math
from dataclasses import dataclass

import numpy as np

from .basis import Region
from .dynamics import VectorField, simulate

_MODES = ("uniform", "raw")


@dataclass(frozen=True)
class HazardPiece:
    region: Region
    level: float
    mode: str = "uniform"
    value: float = None  # resolved pointwise intensity on the region

    def resolve(self, domain_box, resolution=400):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.level < 0:
            raise ValueError("hazard level must be nonnegative")
        if self.mode == "raw":
            value = self.level
        else:
            vol = self.region.volume(within=domain_box, resolution=resolution)
            if vol <= 0:
                raise ValueError("uniform-normalized piece over a zero-volume region")
            value = self.level / vol
        return HazardPiece(self.region, self.level, self.mode, value)


@dataclass(frozen=True)
class HazardModel:
    pieces: tuple

    @classmethod
    def build(cls, pieces, domain_box, resolution=400):
        return cls(tuple(p.resolve(domain_box, resolution) for p in pieces))

    def eval_many(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros(p.shape[0])
        for piece in self.pieces:
            out += piece.value * piece.region.contains(p)
        return out

    def as_function(self):
        return self.eval_many


def eval_p(model, x):
    """Hazard intensity at one state; zero outside every piece."""
    return float(model.eval_many(np.asarray(x, dtype=np.float64)[None, :])[0])


def occupancy_fraction(trajectory, region):
    """Fraction of trajectory time spent inside the region.

    Left-endpoint convention: the final state opens no interval and is not
    counted. Zero-duration trajectories return 0.
    """
    k = len(trajectory.states)
    if k < 2:
        return 0.0
    inside = region.contains(trajectory.states[: k - 1])
    return float(np.count_nonzero(inside)) / (k - 1)


@dataclass(frozen=True)
class McReport:
    estimate: float
    stderr: float
    tail_fraction: float
    n_samples: int
    horizon: float


def box_sampler(box):
    def sample(rng):
        return box.lo + (box.hi - box.lo) * rng.random(box.dim)

    return sample


def region_rejection_sampler(box, exclude=None, max_tries=100000):
    """Uniform sampler on a box minus an excluded region."""

    def sample(rng):
        for _ in range(max_tries):
            x = box.lo + (box.hi - box.lo) * rng.random(box.dim)
            if exclude is None or not bool(exclude.contains(x[None, :])[0]):
                return x
        raise RuntimeError("rejection sampler exhausted; excluded region too large")

    return sample


def _kahan_mean(values):
    total = 0.0
    comp = 0.0
    for val in values:
        yv = val - comp
        tv = total + yv
        comp = (tv - total) - yv
        total = tv
    return total / len(values)


def collision_probability_mc(
    field_or_system,
    mu0_sampler,
    model,
    t_horizon,
    dt,
    n_samples,
    seed,
    stop_region=None,
):
    """Monte-Carlo estimate of the expected hazard-weighted occupancy.

    Each sample draws x0 from mu0, simulates to t_horizon (stopping early
    on domain exit), and accumulates a left-endpoint Riemann sum of
    p(x(t)) dt; anything after an early stop contributes zero. The
    trajectory part is independent of the hazard, so estimates with the
    same seed share trajectories exactly.

    Returns an McReport; tail_fraction is the share of trajectories that
    never entered ``stop_region`` (a truncation warning signal).
    """
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_samples)
    x0s = [mu0_sampler(np.random.default_rng(s)) for s in streams]

    if isinstance(field_or_system, VectorField):
        trajectories = [
            simulate(field_or_system, x0, t_horizon, dt, stop_region=None) for x0 in x0s
        ]
    elif hasattr(field_or_system, "simulate_batch"):
        trajectories = field_or_system.simulate_batch(x0s, t_horizon, dt, stop_at_target=False)
    else:
        trajectories = [field_or_system.simulate(x0, t_horizon, dt) for x0 in x0s]

    integrals = np.empty(n_samples)
    unreached = 0
    for j, traj in enumerate(trajectories):
        k = len(traj.states)
        if k < 2:
            integrals[j] = 0.0
        else:
            integrals[j] = float(np.sum(model.eval_many(traj.states[: k - 1]))) * dt
        if stop_region is not None:
            inside_final = bool(stop_region.contains(traj.states[-1][None, :])[0])
            if not (traj.reached or inside_final):
                unreached += 1
    estimate = _kahan_mean(integrals)
    if n_samples > 1:
        stderr = float(np.std(integrals, ddof=1)) / math.sqrt(n_samples)
    else:
        stderr = 0.0
    tail = unreached / n_samples if stop_region is not None else 0.0
    return McReport(
        estimate=float(estimate),
        stderr=stderr,
        tail_fraction=tail,
        n_samples=n_samples,
        horizon=float(t_horizon),
    )
