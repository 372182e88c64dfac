"""End-to-end batch sampling.

Each sample draws a fresh model (graph + mechanisms + optional regimes), a
fresh observation schedule, and a fresh intervention, then simulates the
counterfactual pair on one shared noise plan. Records export raw values plus
the pre-onset normalization statistics; consumers z-score on their side, so
the exported bytes stay exact.

Determinism: every sample derives from the master seed through the stream
path (batch, item, role); items are independent and may be generated in any
order or in parallel without changing a single byte.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import ConfigDict, BaseModel, Field

from .errors import ConfigurationError, EmptyPreWindowError
from .graph import GraphConfig, sample_random_dag
from .integrator import NoisePlan, Trajectory, paired_simulate
from .intervention import InterventionConfig, InterventionSpec, sample_intervention
from .mechanism import (
    MechanismConfig,
    RegimeConfig,
    TscmSpec,
    attach_regimes,
    sample_regime_spec,
    sample_tscm,
    spec_fingerprint,
)
from .rng import RngStream
from .schedule import ObservationSchedule, ScheduleConfig, draw_schedule

__all__ = [
    "BatchConfig",
    "NormStats",
    "SamplePair",
    "normalize",
    "sample_pair",
    "sample_batch",
    "build_record",
    "batch_record_lines",
    "config_digest",
]

FORMAT_VERSION = 1


class BatchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(ge=0)
    batch_size: int = Field(default=32, ge=1)
    substeps: int = Field(default=8, ge=1)
    norm_clip: float = Field(default=10.0, gt=0.0)
    overflow_guard: float = Field(default=1e12, gt=0.0)
    min_prewindow_obs: int = Field(default=2, ge=2)
    init_mode: Literal["stationary", "zeros"] = "stationary"
    include_oracle: bool = True
    graph: GraphConfig = GraphConfig()
    mechanism: MechanismConfig = MechanismConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    intervention: InterventionConfig = InterventionConfig()
    regime: RegimeConfig = RegimeConfig()


def config_digest(cfg: BatchConfig) -> str:
    """Digest identifying the prior; the seed is kept out so one prior can be
    drawn under many seeds."""
    payload = cfg.model_dump(mode="json")
    payload.pop("seed", None)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def normalize(traj: Trajectory, onset_index: int, clip: float) -> tuple[np.ndarray, NormStats, bool]:
    """Per-variable z-score against pre-onset statistics, clamped to +/-clip.

    Mean/std (ddof=1) come from observations strictly before the intervention
    onset. The std floor max(std, 1e-6 (1 + |mean|)) keeps near-constant
    columns finite. Fewer than two pre-onset observations is an error: the
    degenerate (0, eps) fallback it would otherwise invite silently inflates
    normalized targets.
    """
    if onset_index < 2:
        raise EmptyPreWindowError(
            f"normalization needs >= 2 pre-onset observations, onset_index={onset_index}")
    if clip <= 0.0:
        raise ConfigurationError(f"clip must be positive, got {clip}")
    pre = traj.values[:onset_index]
    mean = pre.mean(axis=0)
    std = np.maximum(pre.std(axis=0, ddof=1), 1e-6 * (1.0 + np.abs(mean)))
    stats = NormStats(mean=mean, std=std)
    z = (traj.values - mean) / std
    saturated = bool((np.abs(z) > clip).any())
    return np.clip(z, -clip, clip), stats, saturated


def _apply_stats(values: np.ndarray, stats: NormStats, clip: float) -> tuple[np.ndarray, np.ndarray]:
    z = (values - stats.mean) / stats.std
    return np.clip(z, -clip, clip), np.abs(z) > clip


@dataclass(frozen=True)
class SamplePair:
    """One training sample: the counterfactual pair plus everything needed to
    normalize and audit it. ``saturated`` tracks the outcome column (the
    training target); ``saturated_any`` tracks every variable."""

    spec: TscmSpec
    spec_digest: str
    observational: Trajectory
    interventional: Trajectory
    intervention: InterventionSpec
    norm_stats: NormStats
    onset_index: int
    substeps: int
    diverged: bool
    saturated: bool
    saturated_any: bool
    batch_index: int = 0
    item_index: int = 0

    @property
    def schedule(self) -> ObservationSchedule:
        return self.observational.schedule


def _draw_model(cfg: BatchConfig, sg: RngStream) -> TscmSpec:
    dag = sample_random_dag(cfg.graph, sg.child("graph"))
    with_regimes = cfg.regime.fraction > 0.0 and (
        sg.child("arm").generator.random() < cfg.regime.fraction)
    mech = sg.child("mechanism")
    if with_regimes:
        return attach_regimes(dag, sample_regime_spec(dag, cfg.mechanism, cfg.regime, mech))
    return sample_tscm(dag, cfg.mechanism, mech)


def _draw_design(cfg: BatchConfig, spec: TscmSpec,
                 sg: RngStream) -> tuple[ObservationSchedule, InterventionSpec, int]:
    """Schedule + intervention with enough pre-onset observations to
    normalize. Window placement is retried first; a schedule too short to ever
    satisfy the onset constraint is redrawn."""
    min_pre = cfg.min_prewindow_obs
    for s_try in range(64):
        sched = draw_schedule(cfg.schedule, sg.child("schedule", s_try))
        if sched.n_obs < min_pre + 1:
            continue
        for i_try in range(128):
            intv = sample_intervention(spec, sched, cfg.intervention,
                                       sg.child("intervention", s_try, i_try))
            onset = int(np.searchsorted(sched.times, intv.window[0], side="left"))
            if min_pre <= onset <= sched.n_obs - 1:
                return sched, intv, onset
    raise ConfigurationError(
        "could not place an intervention window with enough pre-onset observations; "
        "widen the horizon or loosen the window fractions")


def sample_pair(cfg: BatchConfig, stream: RngStream,
                batch_index: int = 0, item_index: int = 0) -> SamplePair:
    sg = stream.child("structure")
    spec = _draw_model(cfg, sg)
    sched, intv, onset = _draw_design(cfg, spec, sg)

    plan = NoisePlan(stream=stream.child("paths"), n_vars=spec.n_vars)
    runs = paired_simulate(spec, sched, cfg.substeps, intv, plan,
                           clip_enabled=cfg.intervention.hard_clip,
                           overflow_guard=cfg.overflow_guard, init_mode=cfg.init_mode)

    _, stats, sat_obs = normalize(runs.observational, onset, cfg.norm_clip)
    _, int_mask = _apply_stats(runs.interventional.values, stats, cfg.norm_clip)
    _, obs_mask = _apply_stats(runs.observational.values, stats, cfg.norm_clip)
    y = spec.dag.outcome
    saturated = bool(obs_mask[:, y].any() or int_mask[:, y].any())
    saturated_any = bool(sat_obs or int_mask.any())

    return SamplePair(
        spec=spec,
        spec_digest=spec_fingerprint(spec),
        observational=runs.observational,
        interventional=runs.interventional,
        intervention=runs.intervention,
        norm_stats=stats,
        onset_index=onset,
        substeps=cfg.substeps,
        diverged=runs.observational.diverged or runs.interventional.diverged,
        saturated=saturated,
        saturated_any=saturated_any,
        batch_index=batch_index,
        item_index=item_index,
    )


def sample_batch(cfg: BatchConfig, batch_index: int = 0, n_workers: int = 1) -> list[SamplePair]:
    """Draw one batch. Items derive independent streams from the master seed,
    so ``n_workers`` changes wall time only, never bytes."""
    root = RngStream(cfg.seed)
    streams = [root.child("batch", batch_index, "item", i) for i in range(cfg.batch_size)]
    if n_workers <= 1:
        return [sample_pair(cfg, s, batch_index, i) for i, s in enumerate(streams)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(sample_pair, cfg, s, batch_index, i)
                   for i, s in enumerate(streams)]
        return [f.result() for f in futures]


def build_record(pair: SamplePair, include_oracle: bool = True) -> dict:
    """Dict form of one exported sample. Arrays stay as float64 ndarrays here;
    serializers decide the wire encoding. Hidden variables appear only in the
    oracle section; the schedule kind is never exported."""
    dag = pair.spec.dag
    observed = dag.observed
    col_of = {int(v): c for c, v in enumerate(observed)}
    intv = pair.intervention
    record: dict = {
        "batch": pair.batch_index,
        "item": pair.item_index,
        "n_vars": int(dag.n_vars),
        "n_obs_vars": int(observed.size),
        "T": int(pair.schedule.n_obs),
        "timestamps": pair.schedule.times,
        "variables": {
            "observed": observed.astype(np.int64),
            "treatment": int(dag.treatment),
            "outcome": int(dag.outcome),
            "treatment_col": col_of[dag.treatment],
            "outcome_col": col_of[dag.outcome],
        },
        "observational": pair.observational.values[:, observed],
        "interventional": pair.interventional.values[:, observed],
        "intervention": {
            "target": int(intv.target),
            "target_col": col_of.get(int(intv.target)),
            "kind": intv.kind,
            "window": [float(intv.window[0]), float(intv.window[1])],
            "value": float(intv.value),
            "waveform": (
                {"amp": intv.amp, "freq": intv.freq, "phase": intv.phase, "offset": intv.offset}
                if intv.kind == "time_varying" else None),
            "clip": list(intv.clip) if intv.clip is not None else None,
        },
        "onset_index": int(pair.onset_index),
        "norm_stats": {
            "mean": pair.norm_stats.mean[observed],
            "std": pair.norm_stats.std[observed],
        },
        "flags": {
            "diverged": pair.diverged,
            "saturated": pair.saturated,
            "saturated_any": pair.saturated_any,
        },
    }
    if include_oracle:
        hidden = np.flatnonzero(dag.hidden)
        record["oracle"] = {
            "spec_digest": pair.spec_digest,
            "hidden": hidden.astype(np.int64),
            "hidden_observational": pair.observational.values[:, hidden],
            "hidden_interventional": pair.interventional.values[:, hidden],
            "norm_stats_full": {"mean": pair.norm_stats.mean, "std": pair.norm_stats.std},
            "regimes": pair.observational.regimes,
        }
    return record


def batch_record_lines(cfg: BatchConfig, batch_index: int, n_workers: int = 1) -> list[str]:
    """Canonical NDJSON line per sample of one batch; the unit shared by the
    file writer and the service so exports agree byte for byte."""
    from .records import encode_record_line

    pairs = sample_batch(cfg, batch_index, n_workers=n_workers)
    return [encode_record_line(build_record(p, cfg.include_oracle)) for p in pairs]
