import numpy as np
import pytest
from pydantic import ValidationError

from ctprior.config import dump_batch_config, format_flat, load_batch_config, parse_flat
from ctprior.dists import FixedDist, LogNormalDist, UniformDist
from ctprior.errors import ConfigurationError
from ctprior.pipeline import BatchConfig, config_digest


# ------------------------------------------------------------------- dists

def test_dist_sampling():
    gen = np.random.default_rng(0)
    u = UniformDist(low=2.0, high=3.0)
    xs = [u.sample(gen) for _ in range(500)]
    assert all(2.0 <= x < 3.0 for x in xs)
    assert np.mean(xs) == pytest.approx(2.5, abs=0.05)

    ln = LogNormalDist(mu=-1.0, sigma=0.5)
    ys = np.array([ln.sample(gen) for _ in range(4000)])
    assert np.all(ys > 0)
    assert np.log(ys).mean() == pytest.approx(-1.0, abs=0.05)
    assert np.log(ys).std() == pytest.approx(0.5, abs=0.05)

    assert FixedDist(value=1.25).sample(gen) == 1.25


def test_dist_validation():
    with pytest.raises(ValidationError):
        UniformDist(low=1.0, high=1.0)
    with pytest.raises(ValidationError):
        LogNormalDist(mu=0.0, sigma=0.0)
    with pytest.raises(ValidationError):
        UniformDist(low=0.0, high=1.0, extra_field=1)


def test_dist_discriminator_in_config():
    cfg = BatchConfig(seed=1, mechanism={"theta": {"dist": "fixed", "value": 0.7}})
    assert isinstance(cfg.mechanism.theta, FixedDist)
    cfg = BatchConfig(seed=1, mechanism={"theta": {"dist": "uniform", "low": 0.5, "high": 2.0}})
    assert isinstance(cfg.mechanism.theta, UniformDist)
    with pytest.raises(ValidationError):
        BatchConfig(seed=1, mechanism={"theta": {"dist": "triangular", "low": 0, "high": 1}})


# -------------------------------------------------------------- flat format

def test_parse_flat_values_and_comments():
    text = """
    # a comment line
    seed = 42
    batch_size = 8          # trailing comment
    schedule.kind = mixed
    schedule.horizon = 32.0
    intervention.kind_probs = [0.5, 0.25, 0.25]
    include_oracle = false
    """
    data = parse_flat(text)
    assert data == {
        "seed": 42,
        "batch_size": 8,
        "schedule": {"kind": "mixed", "horizon": 32.0},
        "intervention": {"kind_probs": [0.5, 0.25, 0.25]},
        "include_oracle": False,
    }


def test_parse_flat_errors_carry_line_numbers():
    with pytest.raises(ConfigurationError, match="line 1"):
        parse_flat("just words")
    with pytest.raises(ConfigurationError, match="line 1"):
        parse_flat("= 1")
    with pytest.raises(ConfigurationError, match="line 2.*conflicts"):
        parse_flat("a.b = 1\na = 2")
    with pytest.raises(ConfigurationError, match="line 2.*conflicts"):
        parse_flat("a = 1\na.b = 2")


def test_format_flat_roundtrip():
    data = {"seed": 3, "schedule": {"kind": "regular", "horizon": 16.0}, "flag": True}
    text = format_flat(data)
    assert parse_flat(text) == data
    assert "schedule.kind = \"regular\"" in text


def test_load_batch_config_from_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "seed = 5\n"
        "substeps = 4\n"
        "graph.n_max = 6\n"
        "mechanism.theta = {\"dist\": \"fixed\", \"value\": 0.9}\n"
    )
    cfg = load_batch_config(path)
    assert cfg.seed == 5 and cfg.substeps == 4 and cfg.graph.n_max == 6
    assert cfg.mechanism.theta == FixedDist(value=0.9)

    over = load_batch_config(path, overrides={"seed": 9, "graph.n_max": 12})
    assert over.seed == 9 and over.graph.n_max == 12
    assert over.substeps == 4  # untouched keys survive the merge


def test_load_batch_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("seed = 1\nno_such_option = 2\n")
    with pytest.raises(ConfigurationError, match="invalid config"):
        load_batch_config(path)


def test_load_batch_config_requires_seed():
    with pytest.raises(ConfigurationError, match="invalid config"):
        load_batch_config(None, overrides={"batch_size": 4})


def test_dump_and_reload_preserves_digest(tmp_path):
    cfg = BatchConfig(seed=77, substeps=16, norm_clip=50.0)
    path = tmp_path / "dumped.cfg"
    path.write_text(dump_batch_config(cfg))
    loaded = load_batch_config(path)
    assert loaded == cfg
    assert config_digest(loaded) == config_digest(cfg)


def test_packaged_defaults_match_model_defaults():
    # the shipped defaults file restates BatchConfig defaults; loading it must
    # produce the same prior digest as constructing the model directly
    from pathlib import Path

    packaged = Path(__file__).resolve().parents[1] / "config" / "defaults.cfg"
    loaded = load_batch_config(packaged)
    assert config_digest(loaded) == config_digest(BatchConfig(seed=loaded.seed))
