"""Command-line client tests.

The CLI talks to an in-process service instance by default, so these tests
cover the full client-to-engine path without a network. Determinism checks
compare output files byte for byte.
"""
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from ctprior.analysis import stability_report
from ctprior.cli import main
from ctprior.config import dump_batch_config, load_batch_config
from ctprior.dists import FixedDist
from ctprior.graph import GraphConfig
from ctprior.mechanism import MechanismConfig, RegimeConfig
from ctprior.pipeline import BatchConfig, config_digest
from ctprior.records import read_dataset, summarize_dataset, to_jsonable
from ctprior.records import canonical_json
from ctprior.schedule import ScheduleConfig


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(path: Path, **overrides) -> BatchConfig:
    cfg = BatchConfig(
        seed=overrides.pop("seed", 5),
        batch_size=3,
        substeps=2,
        graph=GraphConfig(n_max=4),
        schedule=ScheduleConfig(horizon=12.0),
        **overrides,
    )
    path.write_text(dump_batch_config(cfg), encoding="utf-8")
    return cfg


def run_generate(runner, cfg_path: Path, out: Path, *extra) -> None:
    result = runner.invoke(main, [
        "generate", "--config", str(cfg_path), "--batches", "2",
        "--out", str(out), "--quiet", *extra,
    ])
    assert result.exit_code == 0, result.output + result.stderr


def test_generate_is_deterministic_and_parallel_safe(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    out_a, out_b, out_c = (tmp_path / n for n in ("a.ndjson", "b.ndjson", "c.ndjson"))
    run_generate(runner, cfg_path, out_a)
    run_generate(runner, cfg_path, out_b)
    run_generate(runner, cfg_path, out_c, "--parallel", "3")
    blob = out_a.read_bytes()
    assert out_b.read_bytes() == blob
    assert out_c.read_bytes() == blob

    fmt, header, records = read_dataset(out_a)
    assert fmt == "ndjson"
    assert header["seed"] == 5
    assert len(records) == 6  # 2 batches x 3 pairs


def test_generate_binary_matches_ndjson_content(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    nd_path, bin_path = tmp_path / "d.ndjson", tmp_path / "d.ctpb"
    run_generate(runner, cfg_path, nd_path)
    run_generate(runner, cfg_path, bin_path, "--format", "binary")

    _, nd_header, nd_records = read_dataset(nd_path)
    bin_fmt, bin_header, bin_records = read_dataset(bin_path)
    assert bin_fmt == "binary"
    assert canonical_json(nd_header) == canonical_json(bin_header)
    assert len(nd_records) == len(bin_records)
    for a, b in zip(nd_records, bin_records):
        assert canonical_json(to_jsonable(a)) == canonical_json(to_jsonable(b))


def test_generate_reports_summary_line(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg = write_config(cfg_path)
    out = tmp_path / "d.ndjson"
    result = runner.invoke(main, [
        "generate", "--config", str(cfg_path), "--out", str(out)])
    assert result.exit_code == 0
    assert "wrote 3 records in 1 batches" in result.output
    assert f"config digest {config_digest(cfg)}, seed 5" in result.output


def test_generate_default_out_dir_env(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    out_dir = tmp_path / "exports"
    out_dir.mkdir()
    result = runner.invoke(
        main,
        ["generate", "--config", str(cfg_path), "--quiet"],
        env={"CTPRIOR_OUT_DIR": str(out_dir)},
    )
    assert result.exit_code == 0, result.stderr
    assert (out_dir / "dataset.ndjson").exists()


def test_generate_out_directory_target(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    target_dir = tmp_path / "datadir"
    target_dir.mkdir()
    run_generate(runner, cfg_path, target_dir)
    assert (target_dir / "dataset.ndjson").exists()


def test_generate_seed_override_changes_bytes(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    base, other = tmp_path / "base.ndjson", tmp_path / "other.ndjson"
    run_generate(runner, cfg_path, base)
    run_generate(runner, cfg_path, other, "--seed", "6")
    assert base.read_bytes() != other.read_bytes()
    _, header, _ = read_dataset(other)
    assert header["seed"] == 6


def test_generate_usage_errors(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    zero = runner.invoke(main, ["generate", "--config", str(cfg_path), "--batches", "0"])
    assert zero.exit_code == 2
    assert "must be >= 1" in zero.stderr

    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("seed = 1\nno.such.key = 2\n", encoding="utf-8")
    unknown = runner.invoke(main, ["generate", "--config", str(bad_cfg)])
    assert unknown.exit_code == 2

    missing = runner.invoke(main, ["generate", "--config", str(tmp_path / "nope.cfg")])
    assert missing.exit_code == 2


def test_inspect_human_and_json(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg = write_config(cfg_path)
    out = tmp_path / "d.ndjson"
    run_generate(runner, cfg_path, out)

    human = runner.invoke(main, ["inspect", str(out)])
    assert human.exit_code == 0
    assert f"config digest:   {config_digest(cfg)}" in human.output
    assert "records:         6" in human.output

    as_json = runner.invoke(main, ["inspect", str(out), "--json"])
    assert as_json.exit_code == 0
    assert json.loads(as_json.output) == summarize_dataset(out)


def test_inspect_corrupt_file_exits_one(runner, tmp_path):
    cfg_path = tmp_path / "run.cfg"
    write_config(cfg_path)
    out = tmp_path / "d.ndjson"
    run_generate(runner, cfg_path, out)
    lines = out.read_text(encoding="utf-8").splitlines()
    lines[2] = "this is not json"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    result = runner.invoke(main, ["inspect", str(out)])
    assert result.exit_code == 1
    assert result.stderr.startswith("error: invalid dataset")


def test_config_show_round_trips(runner, tmp_path):
    result = runner.invoke(main, ["config-show", "--seed", "7"])
    assert result.exit_code == 0
    shown = tmp_path / "shown.cfg"
    shown.write_text(result.output, encoding="utf-8")
    reloaded = load_batch_config(shown)
    assert reloaded.seed == 7
    assert config_digest(reloaded) == config_digest(BatchConfig(seed=7))


def test_config_show_requires_seed(runner):
    result = runner.invoke(main, ["config-show"])
    assert result.exit_code == 2
    assert "seed" in result.stderr


def test_analyze_stability(runner, tmp_path):
    json_out = tmp_path / "stab.json"
    result = runner.invoke(main, [
        "analyze", "stability", "--theta", "2.5", "--dt", "1.0",
        "--json-out", str(json_out)])
    assert result.exit_code == 0
    assert "stable:         False" in result.output
    assert json.loads(json_out.read_text()) == stability_report(2.5, 1.0).to_dict()


def test_analyze_bias_table(runner):
    result = runner.invoke(main, [
        "analyze", "bias", "--theta", "1.0", "--dts", "0.1,0.3",
        "--n-mc", "2000", "--seed", "3"])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert "theta*dt" in lines[0]
    assert len(lines) == 3
    assert lines[1].split()[0] == "0.1000"

    bad = runner.invoke(main, ["analyze", "bias", "--theta", "1.0", "--dts", "a,b"])
    assert bad.exit_code == 2
    assert "comma-separated numbers" in bad.stderr


def test_analyze_divergence(runner):
    result = runner.invoke(main, [
        "analyze", "divergence", "--theta", "2.5", "--dt", "1.0",
        "--n-obs", "50", "--n-paths", "80", "--seed", "4"])
    assert result.exit_code == 0
    assert "divergence rate:  1.0000" in result.output


def test_analyze_invariance_smoke(runner):
    result = runner.invoke(main, [
        "analyze", "invariance", "--theta", "0.8", "--gap-a", "1.0",
        "--gap-b", "1.0", "--horizon", "6.0", "--substeps", "2",
        "--n-checkpoints", "3", "--n-mc", "64", "--n-permutations", "20",
        "--seed", "12"])
    assert result.exit_code == 0
    assert "invariant:       True" in result.output

    disjoint = runner.invoke(main, [
        "analyze", "invariance", "--gap-a", "1.0", "--gap-b", "0.7",
        "--horizon", "4.0", "--n-mc", "16", "--n-permutations", "20"])
    assert disjoint.exit_code == 1
    assert "share no checkpoint" in disjoint.stderr


def test_analyze_saturation(runner, tmp_path):
    common = dict(
        batch_size=3,
        min_prewindow_obs=6,
        graph=GraphConfig(structure="bivariate"),
        schedule=ScheduleConfig(kind="regular", horizon=16.0, mean_gap=FixedDist(value=1.0)),
        regime=RegimeConfig(fraction=0.0),
    )
    unstable = BatchConfig(
        seed=77, mechanism=MechanismConfig(theta=FixedDist(value=2.5),
                                           sigma=FixedDist(value=0.5)), **common)
    stable = BatchConfig(
        seed=77, mechanism=MechanismConfig(theta=FixedDist(value=0.5),
                                           sigma=FixedDist(value=0.5)), **common)
    u_path, s_path = tmp_path / "unstable.cfg", tmp_path / "stable.cfg"
    u_path.write_text(dump_batch_config(unstable), encoding="utf-8")
    s_path.write_text(dump_batch_config(stable), encoding="utf-8")
    json_out = tmp_path / "sat.json"
    result = runner.invoke(main, [
        "analyze", "saturation", "--unstable-config", str(u_path),
        "--stable-config", str(s_path), "--n-batches", "1", "--tiers", "1",
        "--json-out", str(json_out)])
    assert result.exit_code == 0
    assert "unstable" in result.output and "stable" in result.output
    rows = json.loads(json_out.read_text())["rows"]
    assert [(r["config"], r["substeps"]) for r in rows] == [("unstable", 1), ("stable", 1)]

    bad = runner.invoke(main, [
        "analyze", "saturation", "--unstable-config", str(u_path),
        "--stable-config", str(s_path), "--tiers", "1,x"])
    assert bad.exit_code == 2


def test_version_flag(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    from ctprior import __version__

    assert __version__ in result.output
