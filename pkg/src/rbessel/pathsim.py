"""Path sampling: exact-law Bessel paths on time grids and the reinforcement map.

The base process is sampled through the exact transition of its square
(Poisson-Gamma mixture, real degrees of freedom), so marginals are correct in
law at every grid time regardless of step size — the singular drift at the
origin rules out Euler schemes exactly where the local time lives.  The
reinforced process is then a deterministic space-time transform of the base
path: value t^p R_{t^(1-2p)} / sqrt(1-2p) at the mapped grid time
t = u^(1/(1-2p)).

Grids either have uniform steps or geometric refinement toward zero; the
latter keeps the mapped grid resolved near the origin (where the
reinforcement map dilates time for p < 0) and feeds the local-time weights,
whose mass concentrates at small times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import bessel_values
from ._rng import path_generator
from .specfun import Params

__all__ = [
    "MAX_GRID_POINTS",
    "SampledPath",
    "SeedSpec",
    "TimeGrid",
    "build_grid",
    "reinforce_path",
    "sample_bessel_path",
]

# Hard memory guard: one float64 column of this length is ~1.6 GB.
MAX_GRID_POINTS = 200_000_000

# Default first step of the geometrically refined grid.
GEOMETRIC_DELTA0 = 1e-8


@dataclass(frozen=True)
class SeedSpec:
    """Root of the reproducible stream tree.

    Distinct (master_seed, stream_index) pairs give statistically independent
    streams; within one spec, path i draws from the Philox stream keyed by
    (master_seed, stream_index, i), independent of execution order.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.stream_index < 0:
            raise ValueError("stream_index must be nonnegative")

    def generator(self, path_index: int) -> np.random.Generator:
        return path_generator(self.master_seed, self.stream_index, path_index)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times starting at 0, tagged with the build scheme."""

    times: np.ndarray
    scheme: str = "uniform"

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("grid needs at least two times")
        if t[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.diff(t) > 0.0):
            raise ValueError("grid times must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    def index_of(self, t: float) -> int:
        """Index of grid time t; the time must lie on the grid."""
        i = int(np.searchsorted(self.times, t))
        if i >= self.times.shape[0] or self.times[i] != t:
            raise ValueError(f"time {t} is not a grid point")
        return i


@dataclass(frozen=True)
class SampledPath:
    """Values on a grid; kind tags whether this is a base or reinforced path."""

    grid: TimeGrid
    values: np.ndarray
    kind: str = "bessel"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.times.shape:
            raise ValueError("one value per grid time required")
        if v[0] != 0.0:
            raise ValueError("paths start at the origin")
        if np.any(v < 0.0):
            raise ValueError("values must be nonnegative")
        if self.kind not in ("bessel", "reinforced-bessel"):
            raise ValueError(f"unknown path kind {self.kind!r}")


def build_grid(t_max: float, n_steps: int, scheme: str = "uniform",
               delta0: float = GEOMETRIC_DELTA0,
               include: tuple[float, ...] = ()) -> TimeGrid:
    """Construct a grid on [0, t_max].

    uniform: equal steps.  geometric: increments delta0 * q^k with the ratio
    q > 1 solved (bisection on n log q) so the last point lands on t_max; at
    the defaults roughly a third of all points fall in [0, t_max/100], which
    is the refinement the local-time estimators need.  `include` forces extra
    times (checkpoints) onto the grid exactly.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if n_steps + 1 > MAX_GRID_POINTS:
        raise ValueError(f"n_steps {n_steps} exceeds the {MAX_GRID_POINTS}-point memory guard")
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    if scheme == "uniform":
        times = np.linspace(0.0, t_max, n_steps + 1)
    elif scheme == "geometric":
        if delta0 * n_steps >= t_max:
            raise ValueError("delta0 too large for a ratio > 1; use a uniform grid")
        # solve delta0 (e^c - 1)/(c/n) = t_max for c = n log q
        target = t_max / (delta0 * n_steps)

        def excess(c: float) -> float:
            return math.expm1(c) / c - target

        lo, hi = 1e-12, 700.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if excess(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        c = 0.5 * (lo + hi)
        incr = delta0 * np.exp(c * np.arange(n_steps) / n_steps)
        incr *= t_max / incr.sum()  # kill accumulated rounding drift
        times = np.concatenate(([0.0], np.cumsum(incr)))
        times[-1] = t_max
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    if include:
        extra = np.asarray([t for t in include if 0.0 < t < t_max], dtype=np.float64)
        times = np.union1d(times, extra)
    return TimeGrid(times=times, scheme=scheme)


def sample_bessel_path(grid: TimeGrid, params: Params, seed: SeedSpec,
                       path_index: int = 0) -> SampledPath:
    """Draw one base path on the grid with the exact squared-process transition.

    Marginally from the origin, the squared value at time t is
    Gamma(1 - alpha, scale 2t); between grid points the transition is the
    Poisson-Gamma mixture with real degrees of freedom d = 2(1 - alpha).
    path_index selects the per-path substream of the seed.
    """
    du = grid.steps
    if np.any(du <= 0.0):
        raise ValueError("grid steps must be positive")
    out = np.empty(grid.times.shape[0], dtype=np.float64)
    bessel_values(seed.generator(path_index), params.d / 2.0, du, out)
    return SampledPath(grid=grid, values=out, kind="bessel")


def reinforce_path(base: SampledPath, params: Params) -> SampledPath:
    """Apply the reinforcement transform to a base path.

    The base grid {u_k} maps to {u_k^(1/(1-2p))} and the value at the mapped
    time t is t^p * R_u / sqrt(1-2p), with the value at t = 0 fixed to 0.
    p = 0 is the identity.
    """
    if base.kind != "bessel":
        raise ValueError("reinforce_path expects a base path")
    if params.p == 0.0:
        return SampledPath(grid=base.grid, values=base.values.copy(),
                           kind="reinforced-bessel")
    q = params.one_minus_2p
    u = base.grid.times
    t = u ** (1.0 / q)
    vals = np.empty_like(base.values)
    vals[0] = 0.0
    # factored as (t^p / sqrt(q)) * value so the streaming estimators, which
    # precompute that scale per grid point, round identically
    vals[1:] = t[1:] ** params.p / math.sqrt(q) * base.values[1:]
    return SampledPath(grid=TimeGrid(times=t, scheme=base.grid.scheme),
                       values=vals, kind="reinforced-bessel")
