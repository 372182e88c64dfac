"""Command-line client.

Every data-producing command talks to the HTTP service: either a remote one
via ``--server`` or an in-process instance of the same app (the default), so
local and remote runs exercise one code path and produce identical bytes.

Exit codes: 0 success, 1 runtime failure (corrupt dataset, server error),
2 usage or configuration error.
"""
from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .config import dump_batch_config, load_batch_config
from .errors import ConfigurationError, CtpriorError, RecordFormatError
from .records import arrayify_record, summarize_dataset, write_binary

DEFAULT_PORT = 8711
_EXT = {"ndjson": ".ndjson", "binary": ".ctpb"}


class ApiClient:
    """Uniform facade over a remote server or the in-process app."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server.rstrip("/"), timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette prefers its forked httpx2, which this environment
                # does not ship; the plain-httpx fallback works fine.
                warnings.filterwarnings("ignore", message=".*httpx2.*")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(create_app())

    def request(self, method: str, path: str, payload: dict | None = None):
        response = self._client.request(method, path, json=payload)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except Exception:
                detail = response.text
            raise CtpriorError(f"{method} {path} failed ({response.status_code}): {detail}")
        return response

    def json(self, method: str, path: str, payload: dict | None = None) -> dict:
        return self.request(method, path, payload).json()

    def text(self, method: str, path: str) -> str:
        return self.request(method, path).text

    def close(self) -> None:
        self._client.close()


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_overrides(**pairs) -> dict:
    return {key: value for key, value in pairs.items() if value is not None}


@click.group()
@click.version_option(package_name="ctprior")
def main() -> None:
    """Sample counterfactual trajectory datasets and run the verification
    studies."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Flat config file; defaults applied for absent keys.")
@click.option("--seed", type=int, default=None, help="Master seed (overrides config).")
@click.option("--batches", type=int, default=1, show_default=True)
@click.option("--batch-size", type=int, default=None, help="Override config batch_size.")
@click.option("--substeps", type=int, default=None, help="Override config substeps.")
@click.option("--format", "fmt", type=click.Choice(["ndjson", "binary"]), default="ndjson",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file or directory [default: $CTPRIOR_OUT_DIR or cwd].")
@click.option("--server", default=None, help="Remote service URL; in-process when absent.")
@click.option("--parallel", type=int, default=1, show_default=True,
              help="Concurrent batch requests; output bytes are unaffected.")
@click.option("--oracle/--no-oracle", "oracle", default=None,
              help="Override config include_oracle.")
@click.option("--quiet", is_flag=True)
def generate(config_path, seed, batches, batch_size, substeps, fmt, out_path, server,
             parallel, oracle, quiet) -> None:
    """Generate a dataset of counterfactual trajectory pairs."""
    if batches < 1:
        _fail("--batches must be >= 1", 2)
    overrides = _build_overrides(seed=seed, batch_size=batch_size, substeps=substeps,
                                 include_oracle=oracle)
    try:
        cfg = load_batch_config(config_path, overrides)
    except ConfigurationError as exc:
        _fail(str(exc), 2)

    client = ApiClient(server)
    try:
        created = client.json("POST", "/priors", {"config": cfg.model_dump(mode="json")})
        prior_id = created["prior_id"]
        header_line = client.text("GET", f"/priors/{prior_id}/header").rstrip("\n")

        def fetch(index: int) -> str:
            return client.text("GET", f"/priors/{prior_id}/batches/{index}")

        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                chunks = list(pool.map(fetch, range(batches)))
        else:
            chunks = [fetch(i) for i in range(batches)]
        client.request("DELETE", f"/priors/{prior_id}")
    except CtpriorError as exc:
        _fail(str(exc), 1)
    finally:
        client.close()

    target = _resolve_out(out_path, fmt)
    lines = [line for chunk in chunks for line in chunk.splitlines() if line]
    if fmt == "ndjson":
        target.write_text(header_line + "\n" + "".join(line + "\n" for line in lines),
                          encoding="utf-8")
    else:
        records = [arrayify_record(json.loads(line)) for line in lines]
        write_binary(target, json.loads(header_line), records)
    if not quiet:
        click.echo(f"wrote {len(lines)} records in {batches} batches to {target}")
        click.echo(f"config digest {created['config_digest']}, seed {cfg.seed}")


def _resolve_out(out_path: str | None, fmt: str) -> Path:
    default_name = "dataset" + _EXT[fmt]
    if out_path is None:
        return Path(os.environ.get("CTPRIOR_OUT_DIR", ".")) / default_name
    path = Path(out_path)
    if path.is_dir() or str(out_path).endswith(os.sep):
        path.mkdir(parents=True, exist_ok=True)
        return path / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def inspect(path, as_json) -> None:
    """Validate a dataset file and print its summary."""
    try:
        summary = summarize_dataset(path)
    except RecordFormatError as exc:
        _fail(f"invalid dataset: {exc}", 1)
    if as_json:
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
        return
    click.echo(f"format:          {summary['format']} (v{summary['format_version']})")
    click.echo(f"config digest:   {summary['config_digest']}")
    click.echo(f"seed:            {summary['seed']}")
    click.echo(f"records:         {summary['n_records']}")
    flags = summary["flag_counts"]
    click.echo(f"flags:           diverged={flags['diverged']} "
               f"saturated={flags['saturated']} saturated_any={flags['saturated_any']}")
    kinds = ", ".join(f"{k}={v}" for k, v in sorted(summary["intervention_kinds"].items()))
    click.echo(f"interventions:   {kinds or 'none'}")


@main.command("config-show")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--seed", type=int, default=None)
def config_show(config_path, seed) -> None:
    """Print the fully resolved configuration in flat form."""
    overrides = _build_overrides(seed=seed)
    try:
        cfg = load_batch_config(config_path, overrides)
    except ConfigurationError as exc:
        _fail(str(exc), 2)
    click.echo(dump_batch_config(cfg), nl=False)


@main.group()
def analyze() -> None:
    """Verification studies (stability, bias, invariance, divergence,
    saturation)."""


def _run_analysis(server: str | None, path: str, payload: dict, json_out: str | None) -> dict:
    client = ApiClient(server)
    try:
        result = client.json("POST", path, payload)
    except CtpriorError as exc:
        _fail(str(exc), 1)
    finally:
        client.close()
    if json_out:
        Path(json_out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return result


_server_opt = click.option("--server", default=None, help="Remote service URL.")
_json_out_opt = click.option("--json-out", type=click.Path(), default=None,
                             help="Also write the raw report as JSON.")


@analyze.command()
@click.option("--theta", type=float, required=True)
@click.option("--dt", type=float, required=True)
@_server_opt
@_json_out_opt
def stability(theta, dt, server, json_out) -> None:
    """Closed-form EM stability facts for one (theta, dt)."""
    r = _run_analysis(server, "/analyses/stability", {"theta": theta, "dt": dt}, json_out)
    click.echo(f"theta*dt:       {r['theta_dt']:.6g}")
    click.echo(f"amplification:  {r['amplification']:.6g}")
    click.echo(f"stable:         {r['stable']} (requires theta*dt < 2)")
    click.echo(f"variance bias:  {r['bias_ratio']:.6g}x exact")


@analyze.command()
@click.option("--theta", type=float, required=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--dts", required=True, help="Comma-separated step sizes.")
@click.option("--n-mc", type=int, default=200_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_server_opt
@_json_out_opt
def bias(theta, sigma, dts, n_mc, seed, server, json_out) -> None:
    """Empirical EM variance bias against the exact OU kernel."""
    try:
        dt_list = [float(x) for x in dts.split(",") if x.strip()]
    except ValueError:
        _fail(f"--dts must be comma-separated numbers, got {dts!r}", 2)
    payload = {"theta": theta, "sigma": sigma, "dts": dt_list, "n_mc": n_mc, "seed": seed}
    r = _run_analysis(server, "/analyses/bias", payload, json_out)
    click.echo(f"{'theta*dt':>10} {'empirical':>12} {'predicted':>12}")
    for p in r["points"]:
        click.echo(f"{p['theta_dt']:>10.4f} {p['empirical_bias']:>12.5f} "
                   f"{p['predicted_bias']:>12.5f}")


@analyze.command()
@click.option("--theta", type=float, default=0.5, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--gap-a", type=float, default=1.0, show_default=True)
@click.option("--gap-b", type=float, default=0.5, show_default=True)
@click.option("--horizon", type=float, default=8.0, show_default=True)
@click.option("--substeps", type=int, default=64, show_default=True)
@click.option("--n-checkpoints", type=int, default=4, show_default=True)
@click.option("--n-mc", type=int, default=512, show_default=True)
@click.option("--n-permutations", type=int, default=200, show_default=True)
@click.option("--level", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_server_opt
@_json_out_opt
def invariance(theta, sigma, gap_a, gap_b, horizon, substeps, n_checkpoints, n_mc,
               n_permutations, level, seed, server, json_out) -> None:
    """Schedule-invariance test on the scalar OU benchmark."""
    payload = {
        "theta": theta, "sigma": sigma, "gap_a": gap_a, "gap_b": gap_b,
        "horizon": horizon, "substeps": substeps, "n_checkpoints": n_checkpoints,
        "n_mc": n_mc, "n_permutations": n_permutations, "level": level, "seed": seed,
    }
    r = _run_analysis(server, "/analyses/invariance", payload, json_out)
    click.echo(f"checkpoints:     {', '.join(f'{t:g}' for t in r['checkpoints'])}")
    click.echo(f"substeps:        {r['substeps']}  (n_mc {r['n_mc']} per arm)")
    click.echo(f"KS min p-value:  {r['ks_min_pvalue']:.4g} "
               f"(pass above {r['ks_level']:.4g} after Bonferroni)")
    click.echo(f"energy distance: {r['energy_distance']:.5g} "
               f"(null threshold {r['energy_threshold']:.5g}, p={r['energy_pvalue']:.4g})")
    click.echo(f"invariant:       {r['passed']}")


@analyze.command()
@click.option("--theta", type=float, required=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--dt", type=float, required=True)
@click.option("--n-obs", type=int, default=200, show_default=True)
@click.option("--n-paths", type=int, default=1000, show_default=True)
@click.option("--guard", type=float, default=1e6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_server_opt
@_json_out_opt
def divergence(theta, sigma, dt, n_obs, n_paths, guard, seed, server, json_out) -> None:
    """Monte Carlo divergence-flag rate for scalar OU at one step size."""
    payload = {"theta": theta, "sigma": sigma, "dt": dt, "n_obs": n_obs,
               "n_paths": n_paths, "overflow_guard": guard, "seed": seed}
    r = _run_analysis(server, "/analyses/divergence", payload, json_out)
    click.echo(f"theta*dt:         {r['theta_dt']:.6g}")
    click.echo(f"divergence rate:  {r['divergence_rate']:.4f} "
               f"({payload['n_paths']} paths, {payload['n_obs']} observations)")


@analyze.command()
@click.option("--unstable-config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--stable-config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--n-batches", type=int, default=20, show_default=True)
@click.option("--tiers", default="1,8", show_default=True, help="Comma-separated substeps.")
@_server_opt
@_json_out_opt
def saturation(unstable_config, stable_config, n_batches, tiers, server, json_out) -> None:
    """Per-tier saturation fractions for an unstable and a stable config."""
    try:
        tier_list = [int(x) for x in tiers.split(",") if x.strip()]
        cfg_u = load_batch_config(unstable_config)
        cfg_s = load_batch_config(stable_config)
    except (ValueError, ConfigurationError) as exc:
        _fail(str(exc), 2)
    payload = {
        "unstable": cfg_u.model_dump(mode="json"),
        "stable": cfg_s.model_dump(mode="json"),
        "n_batches": n_batches, "tiers": tier_list,
    }
    r = _run_analysis(server, "/analyses/saturation", payload, json_out)
    click.echo(f"{'config':>10} {'substeps':>9} {'batch frac':>11} {'sample frac':>12} "
               f"{'y_max':>10}")
    for row in r["rows"]:
        click.echo(f"{row['config']:>10} {row['substeps']:>9} "
                   f"{row['batch_saturation_fraction']:>11.3f} "
                   f"{row['sample_saturation_fraction']:>12.3f} {row['y_max']:>10.3f}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=DEFAULT_PORT, show_default=True)
@click.option("--log-level", default="info", show_default=True)
def serve(host, port, log_level) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level=log_level)


if __name__ == "__main__":
    main()
