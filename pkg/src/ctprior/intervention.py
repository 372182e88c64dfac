"""Intervention sampling and per-step application.

Three kinds, drawn with probabilities (hard, soft, time_varying):

- hard:         X_target(t) := c inside the window (diffusion suppressed)
- soft:         drift_target += delta inside the window (diffusion kept)
- time_varying: X_target(t) := a sin(2 pi w t + phi) + b inside the window

Windows live in schedule time: duration is a U[0.10, 0.30] fraction of the
schedule span and the window must fit inside it. Hard values are clipped to
the target's pre-window operating band (mean +/- 3 std from the paired
observational run) before the interventional run is simulated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from pydantic import ConfigDict, BaseModel, Field, model_validator

from .dists import ScalarDist, UniformDist
from .errors import ConfigurationError, ContractViolation
from .mechanism import TscmSpec
from .rng import RngStream
from .schedule import ObservationSchedule

__all__ = [
    "InterventionSpec",
    "InterventionConfig",
    "sample_intervention",
    "apply",
    "positivity_clip",
    "finalize_intervention",
]

log = logging.getLogger(__name__)

KINDS = ("hard", "soft", "time_varying")


@dataclass(frozen=True)
class InterventionSpec:
    target: int
    kind: Literal["hard", "soft", "time_varying"]
    window: tuple[float, float]
    value: float = 0.0       # hard: c (post-clip); soft: delta
    amp: float = 0.0         # time_varying waveform parameters
    freq: float = 0.0
    phase: float = 0.0
    offset: float = 0.0
    clip: tuple[float, float] | None = None  # (mean, std) band used for hard clipping

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown intervention kind {self.kind!r}")
        a, b = self.window
        if not a < b:
            raise ContractViolation(f"window must satisfy start < end, got {self.window}")

    def active(self, t: float) -> bool:
        a, b = self.window
        return a <= t < b

    def value_at(self, t: float) -> float:
        """Pinned value for hard / time-varying kinds."""
        if self.kind == "hard":
            return self.value
        if self.kind == "time_varying":
            return self.amp * math.sin(2.0 * math.pi * self.freq * t + self.phase) + self.offset
        raise ContractViolation("soft interventions pin no value")

    @property
    def pins_state(self) -> bool:
        return self.kind in ("hard", "time_varying")


class InterventionConfig(BaseModel):
    """``kind_probs`` orders (hard, soft, time_varying). ``start_slack`` places
    the window start as a fraction of the available slack (span - duration);
    the default U[0,1] is the unconditioned uniform placement."""

    model_config = ConfigDict(extra="forbid")

    kind_probs: tuple[float, float, float] = (0.6, 0.2, 0.2)
    duration_frac: ScalarDist = UniformDist(low=0.10, high=0.30)
    start_slack: ScalarDist = UniformDist(low=0.0, high=1.0)
    soft_scale: float = Field(default=1.0, gt=0.0)
    hard_clip: bool = True

    @model_validator(mode="after")
    def _check_probs(self) -> "InterventionConfig":
        if any(p < 0.0 for p in self.kind_probs) or abs(sum(self.kind_probs) - 1.0) > 1e-9:
            raise ValueError(f"kind_probs must be non-negative and sum to 1, got {self.kind_probs}")
        return self


def sample_intervention(spec: TscmSpec, sched: ObservationSchedule,
                        cfg: InterventionConfig, rng: RngStream) -> InterventionSpec:
    """Draw kind, target (uniform over non-outcome variables, treatment
    included), window, and raw values. Hard values are clipped later, once the
    observational run's pre-window samples exist."""
    gen = rng.generator
    span = float(sched.times[-1])
    duration = cfg.duration_frac.sample(gen) * span
    if not 0.0 < duration < span:
        raise ConfigurationError(
            f"window duration {duration} does not fit inside schedule span {span}")
    start = cfg.start_slack.sample(gen) * (span - duration)
    window = (start, start + duration)

    candidates = [v for v in range(spec.n_vars) if v != spec.dag.outcome]
    target = int(candidates[gen.integers(len(candidates))])
    kind = KINDS[int(gen.choice(3, p=np.asarray(cfg.kind_probs)))]

    if kind == "hard":
        return InterventionSpec(target=target, kind=kind, window=window,
                                value=float(gen.normal()))
    if kind == "soft":
        return InterventionSpec(target=target, kind=kind, window=window,
                                value=cfg.soft_scale * float(gen.normal()))
    # Sinusoid frequency: log-uniform over one decade centered on the
    # reciprocal window duration, so the waveform completes O(1) cycles.
    log_center = math.log10(1.0 / duration)
    freq = 10.0 ** gen.uniform(log_center - 0.5, log_center + 0.5)
    return InterventionSpec(
        target=target, kind=kind, window=window,
        amp=float(gen.normal()), freq=float(freq),
        phase=float(gen.uniform(0.0, 2.0 * math.pi)), offset=float(gen.normal()),
    )


def positivity_clip(value: float, mean: float, std: float) -> float:
    """Clamp a hard intervention value to the observed operating band
    [mean - 3 std, mean + 3 std]."""
    return float(min(max(value, mean - 3.0 * std), mean + 3.0 * std))


def finalize_intervention(intv: InterventionSpec, obs_values: np.ndarray,
                          times: np.ndarray, enabled: bool = True) -> InterventionSpec:
    """Clip a hard intervention against the pre-window operating range of its
    target, taken from the paired observational run.

    With fewer than 2 pre-window observations clipping is skipped with a
    diagnostic (the value stays as drawn); other kinds pass through.
    """
    if intv.kind != "hard" or not enabled:
        return intv
    onset = int(np.searchsorted(times, intv.window[0], side="left"))
    pre = obs_values[:onset, intv.target]
    pre = pre[np.isfinite(pre)]
    if pre.size < 2:
        log.warning("fewer than 2 pre-window observations of target %d; hard value left unclipped",
                    intv.target)
        return intv
    mean = float(pre.mean())
    std = float(pre.std(ddof=1))
    return replace(intv, value=positivity_clip(intv.value, mean, std), clip=(mean, std))


def apply(intv: InterventionSpec | None, t: float, state: np.ndarray,
          drift: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference per-step application. Outside the window (or with no
    intervention) the inputs pass through unchanged; inside, hard and
    time-varying kinds pin the target's state and zero its drift (the caller
    must also suppress its diffusion), soft shifts the target's drift."""
    if intv is None or not intv.active(t):
        return state, drift
    if intv.kind == "soft":
        drift = drift.copy()
        drift[intv.target] += intv.value
        return state, drift
    state = state.copy()
    drift = drift.copy()
    state[intv.target] = intv.value_at(t)
    drift[intv.target] = 0.0
    return state, drift
