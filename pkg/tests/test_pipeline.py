import json

import numpy as np
import pytest

from ctprior.errors import ConfigurationError, EmptyPreWindowError
from ctprior.graph import GraphConfig
from ctprior.integrator import Trajectory
from ctprior.pipeline import (
    BatchConfig,
    batch_record_lines,
    build_record,
    config_digest,
    normalize,
    sample_batch,
    sample_pair,
    _draw_model,
)
from ctprior.rng import RngStream
from ctprior.schedule import ObservationSchedule, ScheduleConfig
from ctprior.dists import FixedDist


def fast_config(**kw) -> BatchConfig:
    base = dict(
        seed=101,
        batch_size=4,
        substeps=2,
        graph=GraphConfig(n_max=5),
        schedule=ScheduleConfig(horizon=16.0),
    )
    base.update(kw)
    return BatchConfig(**base)


def make_traj(values: np.ndarray) -> Trajectory:
    T = values.shape[0]
    sched = ObservationSchedule(times=np.arange(1.0, T + 1.0), kind="regular", mean_gap=1.0)
    return Trajectory(schedule=sched, values=values, initial_state=values[0] * 0.0)


# ----------------------------------------------------------------- digest

def test_config_digest_ignores_seed_only():
    a = config_digest(fast_config(seed=1))
    b = config_digest(fast_config(seed=999))
    assert a == b and len(a) == 16
    assert config_digest(fast_config(substeps=4)) != a
    assert config_digest(fast_config(norm_clip=50.0)) != a
    assert config_digest(fast_config(graph=GraphConfig(n_max=6))) != a


# -------------------------------------------------------------- normalize

def test_normalize_stats_from_pre_onset_rows():
    values = np.array([[1.0, 10.0], [3.0, 14.0], [100.0, -50.0], [5.0, 0.0]])
    z, stats, saturated = normalize(make_traj(values), onset_index=2, clip=10.0)
    pre = values[:2]
    np.testing.assert_allclose(stats.mean, pre.mean(axis=0))
    np.testing.assert_allclose(stats.std, pre.std(axis=0, ddof=1))
    np.testing.assert_allclose(z[:2], (pre - stats.mean) / stats.std)
    assert np.all(np.abs(z) <= 10.0)
    assert saturated  # row 2 is far outside the pre-onset band


def test_normalize_flags_and_floor():
    # constant column: the std floor keeps z finite and exactly zero
    values = np.column_stack([np.full(6, 4.0), np.linspace(-1, 1, 6)])
    z, stats, saturated = normalize(make_traj(values), onset_index=4, clip=5.0)
    assert stats.std[0] == pytest.approx(1e-6 * 5.0)
    assert np.all(z[:, 0] == 0.0)
    assert not saturated


def test_normalize_rejects_thin_prewindow_and_bad_clip():
    values = np.random.default_rng(0).normal(size=(6, 2))
    with pytest.raises(EmptyPreWindowError):
        normalize(make_traj(values), onset_index=1, clip=10.0)
    with pytest.raises(ConfigurationError):
        normalize(make_traj(values), onset_index=3, clip=0.0)


# ------------------------------------------------------------ sample_pair

def test_sample_pair_deterministic_replay():
    cfg = fast_config()
    stream = RngStream(cfg.seed).child("batch", 0, "item", 2)
    a = sample_pair(cfg, stream, 0, 2)
    b = sample_pair(cfg, RngStream(cfg.seed).child("batch", 0, "item", 2), 0, 2)
    assert a.spec_digest == b.spec_digest
    assert np.array_equal(a.observational.values, b.observational.values)
    assert np.array_equal(a.interventional.values, b.interventional.values)
    assert a.intervention == b.intervention
    c = sample_pair(cfg, RngStream(cfg.seed).child("batch", 0, "item", 3), 0, 3)
    assert c.spec_digest != a.spec_digest or not np.array_equal(
        c.observational.values, a.observational.values)


@pytest.mark.parametrize("seed", [11, 12, 13, 14])
def test_sample_pair_invariants(seed):
    cfg = fast_config(seed=seed)
    pair = sample_pair(cfg, RngStream(seed).child("batch", 0, "item", 0))
    T = pair.schedule.n_obs
    assert cfg.min_prewindow_obs <= pair.onset_index <= T - 1
    a, b = pair.intervention.window
    assert 0 <= a < b <= float(pair.schedule.times[-1]) + 1e-9
    assert pair.intervention.target != pair.spec.dag.outcome
    # pre-onset rows of the pair are bit-identical (shared noise, same model)
    onset_time = pair.intervention.window[0]
    pre = pair.schedule.times < onset_time
    assert np.array_equal(pair.observational.values[pre],
                          pair.interventional.values[pre])
    assert len(pair.spec_digest) == 16


def test_sample_pair_onset_respects_min_prewindow():
    cfg = fast_config(min_prewindow_obs=6)
    for i in range(6):
        pair = sample_pair(cfg, RngStream(55).child("batch", 0, "item", i))
        assert pair.onset_index >= 6


def test_draw_design_failure_is_a_config_error():
    cfg = fast_config(min_prewindow_obs=50,
                      schedule=ScheduleConfig(horizon=8.0, mean_gap=FixedDist(value=1.0)))
    with pytest.raises(ConfigurationError, match="pre-onset"):
        sample_pair(cfg, RngStream(1).child("x"))


def test_regime_arm_frequency():
    cfg = fast_config()
    hits = 0
    n = 1500
    for i in range(n):
        spec = _draw_model(cfg, RngStream(7).child("item", i, "structure"))
        hits += spec.regimes is not None
    assert hits / n == pytest.approx(0.15, abs=0.03)


def test_regime_fraction_zero_disables_arm():
    from ctprior.mechanism import RegimeConfig

    cfg = fast_config(regime=RegimeConfig(fraction=0.0))
    for i in range(30):
        assert _draw_model(cfg, RngStream(8).child("item", i)).regimes is None


# ----------------------------------------------------------- sample_batch

def test_sample_batch_parallel_matches_serial():
    cfg = fast_config(batch_size=6)
    serial = sample_batch(cfg, batch_index=3, n_workers=1)
    parallel = sample_batch(cfg, batch_index=3, n_workers=4)
    assert len(serial) == len(parallel) == 6
    for s, p in zip(serial, parallel):
        assert s.spec_digest == p.spec_digest
        assert np.array_equal(s.observational.values, p.observational.values)
        assert np.array_equal(s.interventional.values, p.interventional.values)


def test_batches_are_independent():
    cfg = fast_config(batch_size=2)
    b0 = sample_batch(cfg, batch_index=0)
    b1 = sample_batch(cfg, batch_index=1)
    assert b0[0].spec_digest != b1[0].spec_digest or not np.array_equal(
        b0[0].observational.values, b1[0].observational.values)


# ------------------------------------------------------------ build_record

def test_record_exposes_observed_columns_only():
    cfg = fast_config(graph=GraphConfig(n_max=8, p_hidden=0.4), seed=303)
    pairs = sample_batch(cfg, 0)
    hidden_seen = False
    for pair in pairs:
        rec = build_record(pair)
        observed = pair.spec.dag.observed
        assert rec["n_obs_vars"] == observed.size
        assert rec["observational"].shape == (rec["T"], observed.size)
        assert rec["interventional"].shape == (rec["T"], observed.size)
        np.testing.assert_array_equal(rec["observational"],
                                      pair.observational.values[:, observed])
        assert rec["variables"]["observed"].tolist() == observed.tolist()
        assert rec["norm_stats"]["mean"].size == observed.size
        if pair.spec.dag.hidden.any():
            hidden_seen = True
            h = np.flatnonzero(pair.spec.dag.hidden)
            assert rec["oracle"]["hidden"].tolist() == h.tolist()
            assert rec["oracle"]["hidden_observational"].shape == (rec["T"], h.size)
    assert hidden_seen


def test_record_role_columns_and_timestamps():
    cfg = fast_config()
    pair = sample_batch(cfg, 0)[0]
    rec = build_record(pair)
    dag = pair.spec.dag
    obs = list(dag.observed)
    assert rec["variables"]["treatment_col"] == obs.index(dag.treatment)
    assert rec["variables"]["outcome_col"] == obs.index(dag.outcome)
    np.testing.assert_array_equal(rec["timestamps"], pair.schedule.times)
    assert rec["onset_index"] == pair.onset_index
    assert rec["flags"] == {
        "diverged": pair.diverged,
        "saturated": pair.saturated,
        "saturated_any": pair.saturated_any,
    }


def test_record_marks_hidden_intervention_target():
    cfg = fast_config(graph=GraphConfig(n_max=6, p_hidden=0.6), seed=404, batch_size=8)
    found_hidden_target = False
    for b in range(6):
        for pair in sample_batch(cfg, b):
            rec = build_record(pair)
            target = pair.intervention.target
            if pair.spec.dag.hidden[target]:
                assert rec["intervention"]["target_col"] is None
                found_hidden_target = True
            else:
                col = rec["intervention"]["target_col"]
                assert rec["variables"]["observed"][col] == target
    assert found_hidden_target


def test_record_oracle_toggle():
    cfg = fast_config()
    pair = sample_batch(cfg, 0)[0]
    assert "oracle" in build_record(pair, include_oracle=True)
    assert "oracle" not in build_record(pair, include_oracle=False)
    rec = build_record(pair)
    assert rec["oracle"]["spec_digest"] == pair.spec_digest


def test_record_waveform_only_for_time_varying():
    from ctprior.intervention import InterventionConfig

    cfg_tv = fast_config(intervention=InterventionConfig(kind_probs=(0.0, 0.0, 1.0)))
    rec = build_record(sample_batch(cfg_tv, 0)[0])
    assert set(rec["intervention"]["waveform"]) == {"amp", "freq", "phase", "offset"}
    cfg_hard = fast_config(intervention=InterventionConfig(kind_probs=(1.0, 0.0, 0.0)))
    rec = build_record(sample_batch(cfg_hard, 0)[0])
    assert rec["intervention"]["waveform"] is None
    assert rec["intervention"]["kind"] == "hard"


# ------------------------------------------------------------------ lines

def test_batch_record_lines_roundtrip_and_parallel_bytes():
    cfg = fast_config(batch_size=3)
    lines = batch_record_lines(cfg, 0)
    assert lines == batch_record_lines(cfg, 0, n_workers=3)
    assert len(lines) == 3
    for i, line in enumerate(lines):
        rec = json.loads(line)
        assert rec["item"] == i
        assert rec["batch"] == 0
        assert len(rec["timestamps"]) == rec["T"]
