"""
Command line entry point
"""
import json
import logging
import sys
from functools import wraps
from pathlib import Path

import click

from emacflow.config import get_settings
from emacflow.schemas.config import RunConfig, parse_config, resolve_mesh_path
from emacflow.services.mesh_service import load_msh
from emacflow.services.run_service import RunService
from emacflow.services.space_service import build_taylor_hood, space_summary
from emacflow.utils.exceptions import (
    ConfigException,
    ConfigurationException,
    EmacflowException,
    EvaluationException,
    LocationException,
    ParameterException,
    ParseException,
    SolverException,
    UsageException,
)

logger = logging.getLogger("emacflow")

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ParseException, OSError)):
        return EXIT_IO
    if isinstance(error, (ConfigException, ConfigurationException, ParameterException)):
        return EXIT_CONFIG
    if isinstance(error, (SolverException, EvaluationException, LocationException, UsageException)):
        return EXIT_SOLVER
    return 1


def handle_errors(command):
    """Map package errors to exit statuses and one-line messages"""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (EmacflowException, OSError) as e:
            detail = getattr(e, "detail", None) or str(e)
            click.echo(f"error: {detail}", err=True)
            sys.exit(exit_code_for(e))
    return wrapper


@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default from LOG_LEVEL)")
def cli(log_level):
    """Incompressible Navier-Stokes with the EMAC form and a time filter"""
    level = (log_level or get_settings().LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@handle_errors
def run(config_path):
    """Run one simulation"""
    config = parse_config(config_path)
    if config.sweep is not None:
        logger.warning("Config has a sweep block; 'run' ignores it (use 'sweep')")
        config = config.model_copy(update={"sweep": None})
    summary = RunService(config).run()
    click.echo(f"{summary.steps} steps to t={summary.final_time:.6g}; output in {config.output_dir}")


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@handle_errors
def sweep(config_path):
    """Run a refinement sweep and tabulate convergence rates"""
    config = parse_config(config_path)
    summary = RunService(config).sweep()
    for k, (value, error) in enumerate(zip(summary.values, summary.errors)):
        rate = summary.rates[k - 1] if k > 0 and summary.rates else None
        click.echo(f"{summary.parameter}={value:<12.6g} error={error if error is not None else float('nan'):.6e}"
                   + (f" rate={rate:.4f}" if rate is not None else ""))


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@handle_errors
def compare(config_path):
    """Run with and without the time filter from identical data"""
    config = parse_config(config_path)
    payload = RunService(config).compare_schemes()
    for metric, delta in payload["delta"].items():
        if delta is not None:
            click.echo(f"{metric:<32} delta={delta:.6e}")


@cli.command("mesh-info")
@click.argument("mesh_path")
@click.option("--tags", "tags_path", default=None, help="Tag table JSON (default: <mesh>.tags.json)")
@click.option("--json", "as_json", is_flag=True, help="Print the counts as JSON")
@handle_errors
def mesh_info(mesh_path, tags_path, as_json):
    """Print vertex, triangle, edge, marker and DOF counts of a mesh file

    MESH_PATH may be 'bundled:cylinder' for the packaged channel mesh.
    """
    path = resolve_mesh_path(mesh_path, base_dir=Path.cwd())
    space = build_taylor_hood(load_msh(path, tags_path))
    counts = space_summary(space)
    if as_json:
        click.echo(json.dumps(counts, indent=2))
        return
    click.echo(f"mesh:            {path}")
    for key in ("vertices", "triangles", "edges", "area", "n_velocity", "n_pressure", "total_dofs"):
        click.echo(f"{key + ':':<16} {counts[key]}")
    for name, count in counts["boundary_edges"].items():
        click.echo(f"marker {name + ':':<9} {count} boundary edges")


@cli.command()
def schema():
    """Print the JSON schema of run configurations"""
    click.echo(json.dumps(RunConfig.model_json_schema(), indent=2))


if __name__ == "__main__":
    cli()
