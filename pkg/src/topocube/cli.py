"""Command-line pipeline driver.

Subcommands: ingest (CSV -> TDC1), graph-stats (saturation curve CSV),
topology (TDT1), cubes (TDQ1), serve (HTTP), oracle (brute-force
cross-checks on small inputs).  Every run logs wall time and peak resident
memory; failures emit machine-readable JSON on stderr and a nonzero exit
status (2 = input, 3 = schema, 4 = config, 1 = internal).
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import resource
import sys
import time

import click

from . import __version__
from .neighbors import ConfigError, EdgeStreamConfig, SpatialIndex, dump_edges as _dump_edges
from .neighbors import saturation_curve
from .project import LoadedProject, ProjectError, stage_cubes, stage_ingest, stage_topology
from .table import FunctionSelector, IngestError, SchemaError, load_table

log = logging.getLogger("topocube")


def _emit_error(code, message, exit_code):
    sys.stderr.write(json.dumps({"code": code, "message": str(message)}) + "\n")
    sys.exit(exit_code)


def pipeline_command(fn):
    """Wrap a subcommand with timing, peak-memory logging and error mapping."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        started = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except FileNotFoundError as exc:
            _emit_error("E_INPUT", exc, 2)
        except (IngestError, ProjectError) as exc:
            _emit_error("E_INPUT", exc, 2)
        except SchemaError as exc:
            _emit_error("E_SCHEMA", exc, 3)
        except (ConfigError, ValueError) as exc:
            _emit_error("E_CONFIG", exc, 4)
        except Exception as exc:  # pragma: no cover - defensive
            _emit_error("E_INTERNAL", f"{type(exc).__name__}: {exc}", 1)
        wall = time.perf_counter() - started
        peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        log.info("done: wall=%.2fs peak_rss=%.1fMB", wall, peak_kb / 1024.0)
        return result

    return wrapper


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", is_flag=True, help="Debug logging.")
def main(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr)


def _parse_csv_list(value):
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def _parse_units(value):
    units = {}
    for item in _parse_csv_list(value):
        if "=" not in item:
            raise SchemaError(f"units entry {item!r} must look like column=unit")
        name, unit = item.split("=", 1)
        units[name.strip()] = unit.strip()
    return units


@main.command()
@click.option("--input", "input_path", required=True, help="Source CSV file.")
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "packed-binary"]))
@click.option("--domain", required=True, help="Comma-separated domain column names.")
@click.option("--measure", required=True, help="Comma-separated measure column names.")
@click.option("--units", default="", help="Optional units, e.g. x0=cm,x1=cm.")
@click.option("--out", "out_dir", required=True, help="Project directory.")
@pipeline_command
def ingest(input_path, fmt, domain, measure, units, out_dir):
    """Validate and pack a point table into a project directory."""
    stage_ingest(input_path, fmt, _parse_csv_list(domain), _parse_csv_list(measure),
                 _parse_units(units), out_dir)


def _load_any_table(input_path, fmt, domain, measure):
    if fmt == "csv":
        return load_table(input_path, format="csv", domain=_parse_csv_list(domain),
                          measure=_parse_csv_list(measure))
    return load_table(input_path, format="packed-binary")


@main.command("graph-stats")
@click.option("--input", "input_path", required=True)
@click.option("--format", "fmt", default="packed-binary", type=click.Choice(["csv", "packed-binary"]))
@click.option("--domain", default="", help="Domain columns (CSV input only).")
@click.option("--measure", default="", help="Measure columns (CSV input only).")
@click.option("--k", "k_list", required=True, help="Comma-separated ascending k values.")
@click.option("--beta", default=1.0, show_default=True)
@click.option("--witness-mode", default="relaxed", type=click.Choice(["strict", "relaxed"]),
              show_default=True)
@click.option("--dump-edges", "dump_path", default=None,
              help="Also dump surviving (u32,u32) edges at max k to this file.")
@click.option("--out", "out_path", required=True, help="Output CSV path.")
@pipeline_command
def graph_stats(input_path, fmt, domain, measure, k_list, beta, witness_mode,
                dump_path, out_path):
    """Edge-saturation curve: surviving edges per candidate count k."""
    table = _load_any_table(input_path, fmt, domain, measure)
    index = SpatialIndex(table)
    k_values = [int(k) for k in _parse_csv_list(k_list)]
    curve = saturation_curve(index, table, k_values, beta=beta, witness_mode=witness_mode)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "edges"])
        writer.writerows(curve)
    if dump_path:
        config = EdgeStreamConfig(k=k_values[-1], beta=beta, witness_mode=witness_mode)
        n_edges = _dump_edges(index, table, config, dump_path)
        log.info("dumped %d edges to %s", n_edges, dump_path)
    for k, edges in curve:
        click.echo(f"k={k} edges={edges}")


@main.command()
@click.option("--input", "input_path", required=True, help="Packed table (TDC1).")
@click.option("--function", "function_column", required=True)
@click.option("--negate", is_flag=True, help="Analyze minima of the function.")
@click.option("--k", default=64, show_default=True)
@click.option("--beta", default=1.0, show_default=True)
@click.option("--witness-mode", default="relaxed", type=click.Choice(["strict", "relaxed"]),
              show_default=True)
@click.option("--symmetrize/--no-symmetrize", default=True, show_default=True)
@click.option("--gradient", default="difference_over_distance",
              type=click.Choice(["difference_over_distance", "raw_difference"]),
              show_default=True)
@click.option("--out", "out_dir", required=True)
@pipeline_command
def topology(input_path, function_column, negate, k, beta, witness_mode,
             symmetrize, gradient, out_dir):
    """Streaming extremum graph + persistence hierarchy (TDT1 artifact)."""
    selector = FunctionSelector(function_column, "negate" if negate else "identity")
    config = EdgeStreamConfig(k=k, beta=beta, witness_mode=witness_mode,
                              symmetrize=symmetrize)
    stage_topology(input_path, selector, config, out_dir, gradient=gradient)


@main.command()
@click.option("--input", "input_path", required=True, help="Packed table (TDC1).")
@click.option("--topology", "topology_path", required=True, help="TDT1 artifact.")
@click.option("--function", "function_column", required=True)
@click.option("--negate", is_flag=True)
@click.option("--resolution", default=64, show_default=True)
@click.option("--leaves", default=64, show_default=True, help="Maximum leaf count.")
@click.option("--t-base", default=None, type=float,
              help="Override the leaf-level persistence threshold.")
@click.option("--pairs", default="", help="Extra scatter pairs, e.g. x0:x2,x1:x3.")
@click.option("--f-triples", is_flag=True, help="Also store (i, j, f) 3-D cubes.")
@click.option("--out", "out_dir", required=True)
@pipeline_command
def cubes(input_path, topology_path, function_column, negate, resolution, leaves,
          t_base, pairs, f_triples, out_dir):
    """Per-leaf-segment datacubes (TDQ1 artifact)."""
    selector = FunctionSelector(function_column, "negate" if negate else "identity")
    extra_pairs = []
    for item in _parse_csv_list(pairs):
        a, _, b = item.partition(":")
        if not b:
            raise SchemaError(f"pair {item!r} must look like axis:axis")
        extra_pairs.append((a, b))
    stage_cubes(input_path, topology_path, selector, out_dir, resolution=resolution,
                max_leaves=leaves, t_base=t_base, extra_pairs=extra_pairs,
                include_f_triples=f_triples)


@main.command()
@click.option("--project", "project_dir", required=True,
              help="Project directory containing manifest.json.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@pipeline_command
def serve(project_dir, host, port):
    """Serve the /v1 query API over the project's artifacts."""
    from .server import serve as _serve

    _serve(LoadedProject(project_dir), host=host, port=port)


@main.command()
@click.option("--seed", default=20240801, show_default=True)
@click.option("--sets", default=5, show_default=True, help="Random point sets per check.")
@click.option("--max-n", default=200, show_default=True)
@pipeline_command
def oracle(seed, sets, max_n):
    """Brute-force cross-checks of the streaming pipeline on small inputs."""
    from .oracle import run_crosschecks

    failures = run_crosschecks(seed=seed, sets=sets, max_n=max_n, echo=click.echo)
    if failures:
        raise click.ClickException(f"{failures} oracle check(s) failed")
    click.echo("all oracle checks passed")


if __name__ == "__main__":
    main()
