"""
qos-feedback command line: run and compare experiments, analyze and identify models.
"""

import functools
import logging
import os
import sys

import click
import numpy as np

from qos_mcp import __version__
from qos_mcp.core import statespace
from qos_mcp.core.errors import InputError, QosError
from qos_mcp.core.metrics import DEFAULT_BINS, DEFAULT_TAIL_THRESHOLD, RunReport, build_report, compare
from qos_mcp.core.plant import ScenarioRun, ScenarioSpec, run_scenario
from qos_mcp.utils.file_utils import get_file_content, write_output_file
from qos_mcp.utils.logging_utils import configure_logging
from qos_mcp.utils.output_utils import (
    CLASS_HISTOGRAM_FILE,
    COMPARISON_FILE,
    HISTOGRAM_FILE,
    REPORT_FILE,
    SERIES_FILE,
    class_histograms_csv,
    format_analysis,
    format_comparison,
    format_report,
    histogram_csv,
    read_trajectory,
    series_csv,
    trace_csv,
    trajectory_csv,
)
from qos_mcp.utils.yaml_utils import emit_model, load_model, load_scenario

logger = logging.getLogger(__name__)

IDENTIFIED_MODEL_FILE = "identified_model.yml"


def handle_errors(func):
    """Turn domain errors into `Error: ...` on stderr and the error's exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except QosError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper


def experiment_options(func):
    func = click.option(
        "--tail-threshold",
        type=click.FloatRange(0.0, 1.0),
        default=DEFAULT_TAIL_THRESHOLD,
        show_default=True,
        help="Utilization above which samples count toward the tail mass.",
    )(func)
    func = click.option(
        "--bins", type=click.IntRange(min=1), default=DEFAULT_BINS, show_default=True, help="Histogram bins."
    )(func)
    func = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override a scenario value, e.g. controller.enabled=false (repeatable).",
    )(func)
    func = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override channel.seed.")(func)
    func = click.option(
        "--out",
        "out_dir",
        type=click.Path(file_okay=False),
        default="results",
        show_default=True,
        help="Output directory.",
    )(func)
    return func


@click.group()
@click.version_option(__version__, prog_name="qos-feedback")
@click.option(
    "--log-level",
    envvar="QOS_LOG_LEVEL",
    default="WARNING",
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Diagnostics written to stderr.",
)
def cli(log_level):
    """Feedback bandwidth control lab for prioritized traffic classes."""
    configure_logging(log_level)


def _report(run: ScenarioRun, bins: int, tail_threshold: float, per_class: bool) -> RunReport:
    return build_report(run.series, run.decisions, bins, tail_threshold, per_class)


def _write_run(out_dir: str, run: ScenarioRun, report: RunReport, title: str) -> None:
    write_output_file(out_dir, SERIES_FILE, series_csv(run.series))
    write_output_file(out_dir, REPORT_FILE, format_report(report, title))
    write_output_file(out_dir, HISTOGRAM_FILE, histogram_csv(report.histogram))
    if report.class_histograms:
        write_output_file(out_dir, CLASS_HISTOGRAM_FILE, class_histograms_csv(report.class_histograms))


def _with_control(spec: ScenarioSpec, enabled: bool) -> ScenarioSpec:
    return spec.model_copy(update={"controller": spec.controller.model_copy(update={"enabled": enabled})})


@cli.command()
@click.argument("scenario", type=click.Path(dir_okay=False))
@experiment_options
@click.option("--per-class", is_flag=True, help="Also write per-class utilization histograms.")
@click.option(
    "--trace-out",
    type=click.Path(dir_okay=False),
    default=None,
    help="Also write the offered loads as a trace file for replay.",
)
@handle_errors
def run(scenario, out_dir, seed, overrides, bins, tail_threshold, per_class, trace_out):
    """Simulate SCENARIO and write the load series, report and histogram."""
    spec = load_scenario(scenario, overrides, seed)
    result = run_scenario(spec)
    report = _report(result, bins, tail_threshold, per_class)
    title = f"{os.path.basename(scenario)} (control {'on' if spec.control_enabled else 'off'})"
    _write_run(out_dir, result, report, title)
    if trace_out:
        write_output_file(os.path.dirname(trace_out) or ".", os.path.basename(trace_out), trace_csv(result.series))
    click.echo(format_report(report, title), nl=False)


@cli.command(name="compare")
@click.argument("scenario", type=click.Path(dir_okay=False))
@experiment_options
@click.option("--per-class", is_flag=True, help="Also write per-class utilization histograms.")
@handle_errors
def compare_cmd(scenario, out_dir, seed, overrides, bins, tail_threshold, per_class):
    """Run SCENARIO without and with control under the same seeds and compare."""
    spec = load_scenario(scenario, overrides, seed)
    name = os.path.basename(scenario)
    reports = {}
    # Sequential arms keep the logs deterministic.
    for label, enabled in (("uncontrolled", False), ("controlled", True)):
        arm = _with_control(spec, enabled)
        result = run_scenario(arm)
        reports[label] = _report(result, bins, tail_threshold, per_class)
        _write_run(os.path.join(out_dir, label), result, reports[label], f"{name} ({label})")
    comparison = compare(reports["uncontrolled"], reports["controlled"])
    text = format_comparison(comparison)
    write_output_file(out_dir, COMPARISON_FILE, text)
    click.echo(text, nl=False)


@cli.command()
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.option(
    "--reach-steps",
    type=click.IntRange(min=1),
    default=None,
    help="Also report the rank of the K-step reachability matrix.",
)
@handle_errors
def analyze(model_file, reach_steps):
    """Print stability, controllability and observability of MODEL_FILE."""
    model = load_model(model_file)
    click.echo(format_analysis(statespace.analyze(model, reach_steps)), nl=False)


@cli.command()
@click.argument("trajectory_file", type=click.Path(dir_okay=False))
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False),
    default=None,
    help=f"Directory to write {IDENTIFIED_MODEL_FILE} into.",
)
@handle_errors
def identify(trajectory_file, out_dir):
    """Fit A and B by least squares to TRAJECTORY_FILE and print the model file with its residual."""
    trajectory = read_trajectory(get_file_content(trajectory_file), trajectory_file)
    result = statespace.identify(trajectory)
    model = statespace.StateSpaceModel(result.A, result.B)
    text = emit_model(model, result.residual)
    if out_dir:
        write_output_file(out_dir, IDENTIFIED_MODEL_FILE, text)
    click.echo(text, nl=False)


def _parse_x0(raw: str | None, n: int) -> np.ndarray:
    if raw is None:
        return np.zeros(n)
    try:
        values = [float(part) for part in raw.split(",")]
    except ValueError:
        raise InputError(f"--x0 must be {n} comma-separated numbers, got '{raw}'")
    if len(values) != n:
        raise InputError(f"--x0 must have {n} values, got {len(values)}")
    return np.array(values)


@cli.command()
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.option("--ticks", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--x0", default=None, help="Initial state as comma-separated values (default zeros).")
@click.option("--out", "out_file", type=click.Path(dir_okay=False), required=True, help="Trajectory file to write.")
@handle_errors
def simulate(model_file, ticks, seed, x0, out_file):
    """Drive MODEL_FILE with bounded random inputs and write the trajectory."""
    model = load_model(model_file)
    inputs = statespace.random_inputs(model, ticks, seed)
    trajectory, clamped = statespace.simulate(model, _parse_x0(x0, model.n), inputs)
    if clamped:
        logger.warning("%d of %d steps were clamped into the state bounds", clamped, ticks)
    write_output_file(os.path.dirname(out_file) or ".", os.path.basename(out_file), trajectory_csv(trajectory))
    click.echo(f"wrote {len(trajectory)} states to {out_file}")


if __name__ == "__main__":
    cli()
