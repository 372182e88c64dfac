"""Observation schedules and integration grids.

A schedule is the strictly increasing sequence of observation times
``t_1 < ... < t_T`` on (0, H]; t = 0 is the initial condition and is never an
observation. Three laws are supported:

- ``regular``:  t_i = i * mean_gap
- ``jittered``: gaps mean_gap * (1 + xi), xi ~ U[-jitter, jitter]
- ``poisson``:  gaps ~ Exponential(mean == mean_gap)

``mixed`` picks one of the three uniformly per sample. Integration grids
refine a schedule for the simulator; observation times always appear exactly
(bitwise) in the grid so that sampled values line up with no interpolation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import ConfigDict, BaseModel, Field

from .dists import ScalarDist, UniformDist
from .errors import ConfigurationError, ContractViolation
from .rng import RngStream

__all__ = [
    "ObservationSchedule",
    "FineGrid",
    "ScheduleConfig",
    "SCHEDULE_KINDS",
    "sample_schedule",
    "draw_schedule",
    "build_substep_grid",
    "build_union_grid",
]

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("regular", "jittered", "poisson")


@dataclass(frozen=True)
class ObservationSchedule:
    times: np.ndarray
    kind: str
    mean_gap: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 2:
            raise ContractViolation("schedule needs at least 2 observation times")
        if times[0] <= 0.0:
            raise ContractViolation("first observation must be after t=0")
        if np.any(np.diff(times) <= 0.0):
            raise ContractViolation("observation times must be strictly increasing")

    @property
    def n_obs(self) -> int:
        return self.times.size

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.times, prepend=0.0)


@dataclass(frozen=True)
class FineGrid:
    """Integration grid over [0, t_T].

    ``times[0] == 0`` carries the initial state. ``obs_index[i]`` locates
    observation i in ``times`` (exact float membership). ``delta_fine`` is the
    largest step on the grid.
    """

    times: np.ndarray
    obs_index: np.ndarray
    delta_fine: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        idx = np.asarray(self.obs_index, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "obs_index", idx)
        if times[0] != 0.0:
            raise ContractViolation("grid must start at t=0")
        steps = np.diff(times)
        if np.any(steps <= 0.0):
            raise ContractViolation("grid times must be strictly increasing")
        if steps.size and float(steps.max()) > self.delta_fine * (1.0 + 1e-9):
            raise ContractViolation("grid contains a step wider than delta_fine")

    @property
    def n_steps(self) -> int:
        return self.times.size - 1


class ScheduleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["regular", "jittered", "poisson", "mixed"] = "mixed"
    horizon: float = Field(default=64.0, gt=0.0)
    mean_gap: ScalarDist = UniformDist(low=0.5, high=2.0)
    jitter: ScalarDist = UniformDist(low=0.0, high=0.8)


def sample_schedule(kind: str, horizon: float, mean_gap: float, jitter: float,
                    rng: RngStream) -> ObservationSchedule:
    """Draw one schedule of the given law, truncated at the horizon.

    A draw with fewer than 2 points (possible under the Poisson law) is
    resampled from the same stream.
    """
    if kind not in SCHEDULE_KINDS:
        raise ConfigurationError(f"unknown schedule kind {kind!r}; known: {SCHEDULE_KINDS}")
    if mean_gap <= 0.0:
        raise ConfigurationError(f"mean_gap must be positive, got {mean_gap}")
    if horizon <= mean_gap:
        raise ConfigurationError(f"horizon {horizon} must exceed mean_gap {mean_gap}")
    if not (0.0 <= jitter < 1.0):
        raise ConfigurationError(f"jitter must lie in [0, 1), got {jitter}")

    gen = rng.generator
    if kind == "regular":
        n = int(np.floor(horizon / mean_gap))
        times = mean_gap * np.arange(1, n + 1, dtype=np.float64)
        times = times[times <= horizon]
        return ObservationSchedule(times=times, kind=kind, mean_gap=mean_gap)

    for _ in range(64):
        # Draw gaps in chunks until the running sum clears the horizon.
        chunks: list[np.ndarray] = []
        total = 0.0
        while total <= horizon:
            size = max(16, int(2 * horizon / mean_gap))
            if kind == "jittered":
                gaps = mean_gap * (1.0 + gen.uniform(-jitter, jitter, size=size))
            else:
                gaps = gen.exponential(mean_gap, size=size)
            chunks.append(gaps)
            total += float(gaps.sum())
        times = np.cumsum(np.concatenate(chunks))
        times = times[times <= horizon]
        if times.size >= 2:
            return ObservationSchedule(times=times, kind=kind, mean_gap=mean_gap)
    raise ConfigurationError(
        f"could not draw a {kind} schedule with >=2 points on horizon {horizon} (mean_gap {mean_gap})"
    )


def draw_schedule(cfg: ScheduleConfig, rng: RngStream) -> ObservationSchedule:
    """Sample schedule hyperparameters from the config, then the schedule."""
    gen = rng.generator
    kind = cfg.kind
    if kind == "mixed":
        kind = SCHEDULE_KINDS[int(gen.integers(len(SCHEDULE_KINDS)))]
    mean_gap = cfg.mean_gap.sample(gen)
    jitter = cfg.jitter.sample(gen) if kind == "jittered" else 0.0
    return sample_schedule(kind, cfg.horizon, mean_gap, jitter, rng)


def build_substep_grid(sched: ObservationSchedule, substeps: int) -> FineGrid:
    """Split every inter-observation gap (including t=0 -> t_1) into
    ``substeps`` equal Euler steps. substeps=1 integrates on the observation
    grid itself."""
    if substeps < 1:
        raise ConfigurationError(f"substeps must be >= 1, got {substeps}")
    anchors = np.concatenate(([0.0], sched.times))
    if substeps == 1:
        grid = anchors
    else:
        left = anchors[:-1]
        gaps = np.diff(anchors)
        fracs = np.arange(1, substeps, dtype=np.float64) / substeps
        interior = left[:, None] + gaps[:, None] * fracs[None, :]
        # Interleave interiors with the exact anchor floats.
        parts = np.column_stack([interior, anchors[1:]])
        grid = np.concatenate(([0.0], parts.reshape(-1)))
    obs_index = substeps * np.arange(1, sched.n_obs + 1, dtype=np.int64)
    delta = float(np.diff(grid).max())
    return FineGrid(times=grid, obs_index=obs_index, delta_fine=delta)


def build_union_grid(sched: ObservationSchedule, delta_fine: float) -> FineGrid:
    """Union of a uniform delta_fine lattice on [0, t_T] with the observation
    times. Observation times are inserted exactly, never matched by tolerance;
    lattice points are kept as-is, so two grid points may sit arbitrarily
    close, which only shortens one Euler step."""
    if delta_fine <= 0.0:
        raise ConfigurationError(f"delta_fine must be positive, got {delta_fine}")
    widest = float(np.diff(sched.times, prepend=0.0).max())
    if delta_fine >= widest:
        log.warning(
            "delta_fine %g is no finer than the widest observation gap %g; "
            "the union grid degenerates toward the observation grid", delta_fine, widest,
        )
    end = float(sched.times[-1])
    n = int(np.floor(end / delta_fine))
    lattice = delta_fine * np.arange(0, n + 1, dtype=np.float64)
    lattice = lattice[lattice < end]
    grid = np.union1d(lattice, sched.times)
    obs_index = np.searchsorted(grid, sched.times)
    if not np.array_equal(grid[obs_index], sched.times):
        raise ContractViolation("observation times lost during grid union")
    delta = float(np.diff(grid).max())
    return FineGrid(times=grid, obs_index=obs_index, delta_fine=max(delta_fine, delta))
