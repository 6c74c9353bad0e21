"""Command-line front end.

Every command takes a scenario file via --config.  By default the work
runs in-process; pass --server (or set RODMAP_SERVER) to forward the
request to a running service instead — the scenario is loaded and
path-resolved locally, then posted as JSON, so relative paths in the file
keep meaning what they meant next to it.

Exit codes: 0 success, 1 configuration error (bad scenario file or bad
command line), 2 no route exists, 3 missing or corrupt artifact files.
"""

from __future__ import annotations

import sys

import click
import httpx

from . import __version__, pipeline
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_UNREACHABLE = 2
EXIT_IO = 3

# click exits with 2 on parser misuse, but 2 means "no route exists" here;
# a bad flag is a configuration problem, same bucket as a bad scenario file
click.UsageError.exit_code = EXIT_CONFIG

THREADS_ENV = "RODMAP_THREADS"
SERVER_ENV = "RODMAP_SERVER"

_METRIC_HEADER = (f"{'name':<18} {'n_nodes':>7} {'L_tip':>10} "
                  f"{'E_act':>10} {'TV_act':>10} {'search_s':>9}")


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)


def _metric_row(name: str, metrics: dict, search_time: float) -> str:
    return (f"{name:<18} {metrics['n_nodes']:>7d} {metrics['tip_path_length']:>10.4f} "
            f"{metrics['activation_energy']:>10.4f} {metrics['activation_tv']:>10.4f} "
            f"{search_time:>9.4f}")


def _delta_row(name: str, deltas: dict) -> str:
    def cell(v):
        return "      n/a" if v is None else f"{v:>+9.2f}%"
    return (f"{name:<18} {'':>7} {cell(deltas['tip_path_length_pct'])} "
            f"{cell(deltas['activation_energy_pct'])} {cell(deltas['activation_tv_pct'])}")


def _make_client(server: str) -> httpx.Client:
    """Separated so tests can swap in an in-process ASGI transport."""
    return httpx.Client(base_url=server, timeout=600.0)


def _post(server: str, endpoint: str, payload: dict) -> dict:
    with _make_client(server) as client:
        resp = client.post(endpoint, json=payload)
    if resp.status_code == 409:
        raise SystemExit(_exit_with(resp, EXIT_UNREACHABLE))
    if resp.status_code == 422:
        raise SystemExit(_exit_with(resp, EXIT_CONFIG))
    if resp.status_code >= 400:
        raise SystemExit(_exit_with(resp, EXIT_IO))
    return resp.json()


def _exit_with(resp: httpx.Response, code: int) -> int:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        detail = resp.text
    _fail(f"server returned {resp.status_code}: {detail}")
    return code


def _scenario_payload(scenario: Scenario) -> dict:
    return scenario.model_dump(mode="json", by_alias=True)


def _dispatch(fn) -> int:
    """Run fn, mapping the shared failure taxonomy onto exit codes."""
    try:
        fn()
        return EXIT_OK
    except SystemExit:
        raise
    except pipeline.ROUTE_ERRORS as exc:
        _fail(str(exc))
        return EXIT_UNREACHABLE
    except pipeline.CONFIG_ERRORS as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    except pipeline.IO_ERRORS as exc:
        _fail(str(exc))
        return EXIT_IO
    except httpx.HTTPError as exc:
        _fail(f"cannot reach server: {exc}")
        return EXIT_IO


def _common_options(fn):
    fn = click.option("--server", default=None, envvar=SERVER_ENV, metavar="URL",
                      help=f"Forward to a running service (default: ${SERVER_ENV}).")(fn)
    fn = click.option("--threads", type=click.IntRange(min=1), default=1,
                      envvar=THREADS_ENV, show_default=True,
                      help=f"Worker threads (default: ${THREADS_ENV} or 1).")(fn)
    fn = click.option("--out-dir", type=click.Path(file_okay=False), default=None,
                      help="Directory for generated artifacts and exports.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(dir_okay=False),
                      help="Scenario JSON file.")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="rodmap")
def main():
    """Precompute shape libraries and plan collision-free arm routes."""


@main.command("gen-lib")
@_common_options
@click.option("--seed", type=click.IntRange(min=0), default=None,
              help="Override the scenario's sampling seed.")
def gen_lib(config_path, out_dir, threads, server, seed):
    """Sample activations and integrate the shape library."""
    def work():
        scenario = load_scenario(config_path)
        if server:
            res = _post(server, "/library/generate", {
                "scenario": _scenario_payload(scenario), "out_dir": out_dir,
                "seed": seed, "threads": threads})
            click.echo(f"library {res['library_path']}: N={res['n']} n_z={res['n_z']} "
                       f"seed={res['seed']} sha256={res['digest'][:12]} "
                       f"({res['seconds']:.2f}s)")
        else:
            res = pipeline.run_gen_lib(scenario, out_dir=out_dir, seed=seed,
                                       threads=threads)
            click.echo(f"library {res.library_path}: N={res.n} n_z={res.n_z} "
                       f"seed={res.seed} sha256={res.digest_hex[:12]} "
                       f"({res.seconds:.2f}s)")
    sys.exit(_dispatch(work))


@main.command("build-graph")
@_common_options
def build_graph(config_path, out_dir, threads, server):
    """Connect library shapes into the exact k-NN graph."""
    def work():
        scenario = load_scenario(config_path)
        if server:
            res = _post(server, "/graph/build", {
                "scenario": _scenario_payload(scenario), "out_dir": out_dir,
                "threads": threads})
            click.echo(f"graph {res['graph_path']}: N={res['n_nodes']} k={res['k']} "
                       f"E={res['n_edges']} sha256={res['digest'][:12]} "
                       f"({res['seconds']:.2f}s)")
        else:
            res = pipeline.run_build_graph(scenario, out_dir=out_dir, threads=threads)
            click.echo(f"graph {res.graph_path}: N={res.n_nodes} k={res.k} "
                       f"E={res.n_edges} sha256={res.digest_hex[:12]} "
                       f"({res.seconds:.2f}s)")
    sys.exit(_dispatch(work))


@main.command("plan")
@_common_options
def plan(config_path, out_dir, threads, server):
    """Plan a route through the scenario's waypoints."""
    del threads
    def work():
        scenario = load_scenario(config_path)
        name = scenario.name or "plan"
        if server:
            res = _post(server, "/plan", {
                "scenario": _scenario_payload(scenario), "out_dir": out_dir})
            metrics, search_time = res["document"]["metrics"], res["search_time"]
            files = res["json_path"]
        else:
            outcome = pipeline.run_plan(scenario, out_dir=out_dir)
            metrics, search_time = outcome.document["metrics"], outcome.plan.search_time
            files = outcome.json_path
        click.echo(_METRIC_HEADER)
        click.echo(_metric_row(name, metrics, search_time))
        if files:
            click.echo(f"wrote {files}")
    sys.exit(_dispatch(work))


@main.command("compare")
@_common_options
def compare(config_path, out_dir, threads, server):
    """Plan geometry-only vs energy-aware and report metric changes."""
    del threads
    def work():
        scenario = load_scenario(config_path)
        name = scenario.name or "compare"
        if server:
            res = _post(server, "/compare", {
                "scenario": _scenario_payload(scenario), "out_dir": out_dir})
            rows = [
                (f"{name}.geometry", res["geometry"]["document"]["metrics"],
                 res["geometry"]["search_time"]),
                (f"{name}.energy", res["energy"]["document"]["metrics"],
                 res["energy"]["search_time"]),
            ]
            deltas = res["deltas_pct"]
            files = res["json_path"]
        else:
            outcome = pipeline.run_compare(scenario, out_dir=out_dir)
            rows = [
                (f"{name}.geometry", outcome.geometry.document["metrics"],
                 outcome.geometry.plan.search_time),
                (f"{name}.energy", outcome.energy.document["metrics"],
                 outcome.energy.plan.search_time),
            ]
            deltas = outcome.deltas_pct
            files = outcome.json_path
        click.echo(_METRIC_HEADER)
        for row_name, metrics, search_time in rows:
            click.echo(_metric_row(row_name, metrics, search_time))
        click.echo(_delta_row("delta", deltas))
        if files:
            click.echo(f"wrote {files}")
    sys.exit(_dispatch(work))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP planning service."""
    import uvicorn

    uvicorn.run("rodmap.service:app", host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
