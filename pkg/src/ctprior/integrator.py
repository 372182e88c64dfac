"""Euler-Maruyama simulation with shared-noise counterfactual pairing.

The simulator walks a fine grid refining the observation schedule and records
state at the observation times only. All randomness is materialized through a
``NoisePlan`` whose draws replay bit-identically, so an observational and an
interventional run consume exactly the same initial state, Brownian
increments, and regime path. The intervened variable's increments are still
generated (and overwritten) inside hard/time-varying windows, which keeps
every other variable's noise aligned between the paired runs.

One Euler step is

    X' = X + mu(X) dt + sigma sqrt(dt) Z,   Z ~ N(0, I)

evaluated in exactly this floating-point order; tests replaying the
discrete-time recursion rely on that order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .intervention import InterventionSpec, finalize_intervention
from .mechanism import TscmSpec, drift
from .rng import RngStream
from .schedule import FineGrid, ObservationSchedule, build_substep_grid

__all__ = [
    "NoisePlan",
    "Trajectory",
    "PairedTrajectories",
    "em_step",
    "exact_ou_transition",
    "simulate",
    "paired_simulate",
]


@dataclass
class NoisePlan:
    """Replayable source of everything random in a simulation.

    The plan owns three child streams (init, noise, regime) and materializes
    each draw lazily, caching by shape, so repeated requests return
    bit-identical arrays. One plan is meant to serve one spec; do not share
    across specs.
    """

    stream: RngStream
    n_vars: int
    _init: dict = field(default_factory=dict, repr=False)
    _tapes: dict = field(default_factory=dict, repr=False)
    _regimes: dict = field(default_factory=dict, repr=False)

    def init_state(self, spec: TscmSpec, mode: str = "stationary") -> np.ndarray:
        """Initial state at t=0. ``stationary`` scales a standard normal by
        sigma_v / sqrt(2 theta_v), the stationary spread of the mean-reverting
        part; ``zeros`` starts at the origin (still consuming no draws)."""
        if spec.n_vars != self.n_vars:
            raise ContractViolation("noise plan sized for a different spec")
        cached = self._init.get(mode)
        if cached is None:
            if mode == "zeros":
                cached = np.zeros(self.n_vars)
            elif mode == "stationary":
                gen = self.stream.child("init").fresh_generator()
                z = gen.standard_normal(self.n_vars)
                arrays = spec.bank_arrays(0)
                cached = arrays.sigmas / np.sqrt(2.0 * arrays.theta) * z
            else:
                raise ConfigurationError(f"unknown init mode {mode!r}")
            self._init[mode] = cached
        return cached

    def tape(self, n_steps: int) -> np.ndarray:
        """Standard-normal increments, one row per fine step."""
        cached = self._tapes.get(n_steps)
        if cached is None:
            gen = self.stream.child("noise").fresh_generator()
            cached = gen.standard_normal((n_steps, self.n_vars))
            self._tapes[n_steps] = cached
        return cached

    def regime_path(self, spec: TscmSpec, n_obs: int) -> np.ndarray | None:
        """Markov regime path: entry 0 rules [0, t_1), entry i rules
        [t_i, t_{i+1}); transitions fire at observation times."""
        if spec.regimes is None:
            return None
        cached = self._regimes.get(n_obs)
        if cached is None:
            gen = self.stream.child("regime").fresh_generator()
            r = spec.n_regimes
            cum = np.cumsum(spec.regimes.transition, axis=1)
            path = np.empty(n_obs, dtype=np.int64)
            path[0] = gen.integers(r)
            u = gen.random(n_obs - 1)
            for i in range(1, n_obs):
                path[i] = np.searchsorted(cum[path[i - 1]], u[i - 1], side="right")
            cached = np.minimum(path, r - 1)
            self._regimes[n_obs] = cached
        return cached


@dataclass(frozen=True)
class Trajectory:
    """States at observation times (T, N), plus the regime in effect at each
    observation when the spec switches regimes."""

    schedule: ObservationSchedule
    values: np.ndarray
    initial_state: np.ndarray
    regimes: np.ndarray | None = None
    diverged: bool = False
    fine_times: np.ndarray | None = None
    fine_values: np.ndarray | None = None

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PairedTrajectories:
    observational: Trajectory
    interventional: Trajectory
    intervention: InterventionSpec


def em_step(state: np.ndarray, drift_value: np.ndarray, sigmas: np.ndarray,
            dt: float, z: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama update. Non-finite inputs propagate unchanged; the
    divergence guard lives in ``simulate``."""
    if dt <= 0.0:
        raise ContractViolation(f"step size must be positive, got {dt}")
    return state + drift_value * dt + (sigmas * np.sqrt(dt)) * z


def exact_ou_transition(theta: float, sigma: float, dt: float) -> tuple[float, float]:
    """Exact transition kernel of dX = -theta X dt + sigma dW over a gap dt:
    X(t+dt) | X(t) ~ N(decay * X(t), variance) with

        decay    = exp(-theta dt)
        variance = sigma^2 (1 - exp(-2 theta dt)) / (2 theta)
    """
    if theta <= 0.0 or dt <= 0.0:
        raise ConfigurationError("exact transition requires theta > 0 and dt > 0")
    decay = float(np.exp(-theta * dt))
    variance = float(sigma**2 * (1.0 - np.exp(-2.0 * theta * dt)) / (2.0 * theta))
    return decay, variance


def simulate(spec: TscmSpec, sched: ObservationSchedule, substeps: int,
             noise: NoisePlan, intervention: InterventionSpec | None = None, *,
             overflow_guard: float = 1e12, init_mode: str = "stationary",
             grid: FineGrid | None = None, record_fine: bool = False) -> Trajectory:
    """Integrate the spec over a fine grid and subsample at observations.

    The state is clamped to +/- overflow_guard whenever it escapes, and the
    trajectory is flagged diverged. Clamping (rather than leaving inf) keeps
    every coordinate finite so diverging variables cannot poison unrelated
    ones through 0 * inf in the coupling product, preserving the bit-parity
    contract for non-descendants under intervention.
    """
    if intervention is not None and not 0 <= intervention.target < spec.n_vars:
        raise ContractViolation("intervention target outside spec")
    if grid is None:
        grid = build_substep_grid(sched, substeps)
    times = grid.times
    dts = np.diff(times)
    n_steps = dts.size
    n_obs = sched.n_obs

    tape = noise.tape(n_steps)
    x = noise.init_state(spec, init_mode).copy()
    regime_path = noise.regime_path(spec, n_obs)

    if regime_path is None:
        step_regime = np.zeros(n_steps, dtype=np.int64)
        sigma_rows = np.broadcast_to(spec.bank_arrays(0).sigmas, (n_steps, spec.n_vars))
    else:
        # Step j runs on [times[j], times[j+1]); it uses the regime ruling its
        # left endpoint (transitions fire exactly at observation times).
        step_regime = regime_path[np.searchsorted(sched.times, times[:-1], side="right")]
        sigma_banks = np.stack([spec.bank_arrays(r).sigmas for r in range(spec.n_regimes)])
        sigma_rows = sigma_banks[step_regime]

    noise_rows = (sigma_rows * np.sqrt(dts)[:, None]) * tape

    pins = intervention is not None and intervention.pins_state
    soft = intervention is not None and intervention.kind == "soft"
    if intervention is not None:
        a, b = intervention.window
        active = (times >= a) & (times < b)
        if pins:
            if intervention.kind == "hard":
                pin_values = np.full(times.size, intervention.value)
            else:
                pin_values = (intervention.amp
                              * np.sin(2.0 * np.pi * intervention.freq * times + intervention.phase)
                              + intervention.offset)
        target = intervention.target
        delta = intervention.value

    is_obs = np.zeros(times.size, dtype=bool)
    is_obs[grid.obs_index] = True

    if pins and active[0]:
        x[target] = pin_values[0]

    values = np.empty((n_obs, spec.n_vars))
    initial_state = x.copy()
    diverged = False
    fine = np.empty((times.size, spec.n_vars)) if record_fine else None
    if record_fine:
        fine[0] = x
    obs_i = 0
    for j in range(n_steps):
        mu = drift(spec, x, int(step_regime[j]))
        if soft and active[j]:
            mu[target] += delta
        x = x + mu * dts[j] + noise_rows[j]
        if pins and active[j + 1]:
            x[target] = pin_values[j + 1]
        peak = float(np.abs(x).max())
        if peak > overflow_guard:
            diverged = True
            np.clip(x, -overflow_guard, overflow_guard, out=x)
        if record_fine:
            fine[j + 1] = x
        if is_obs[j + 1]:
            values[obs_i] = x
            obs_i += 1

    regimes = regime_path if regime_path is not None else None
    return Trajectory(
        schedule=sched, values=values, initial_state=initial_state, regimes=regimes,
        diverged=diverged,
        fine_times=times if record_fine else None,
        fine_values=fine if record_fine else None,
    )


def paired_simulate(spec: TscmSpec, sched: ObservationSchedule, substeps: int,
                    intervention: InterventionSpec,
                    seed: int | RngStream | NoisePlan, *,
                    clip_enabled: bool = True, overflow_guard: float = 1e12,
                    init_mode: str = "stationary") -> PairedTrajectories:
    """Simulate the observational and interventional runs on one noise plan.

    The observational run goes first so the hard-intervention value can be
    clipped to the target's pre-window operating band before the second run.
    """
    if isinstance(seed, NoisePlan):
        plan = seed
    else:
        stream = seed if isinstance(seed, RngStream) else RngStream(seed)
        plan = NoisePlan(stream=stream, n_vars=spec.n_vars)
    observational = simulate(spec, sched, substeps, plan, None,
                             overflow_guard=overflow_guard, init_mode=init_mode)
    final = finalize_intervention(intervention, observational.values, sched.times,
                                  enabled=clip_enabled)
    interventional = simulate(spec, sched, substeps, plan, final,
                              overflow_guard=overflow_guard, init_mode=init_mode)
    return PairedTrajectories(observational=observational, interventional=interventional,
                              intervention=final)
