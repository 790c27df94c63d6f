"""
Utilities for result files in the qos-feedback-mcp project.
Comma-separated export of load series and histograms, trace and trajectory
files, and the human-readable report blocks printed by the CLI.
"""

import csv
import io
import math
from collections.abc import Iterable, Mapping

import numpy as np

from qos_mcp.core.errors import ScenarioFileError
from qos_mcp.core.metrics import ComparisonReport, LoadHistogram, RunReport
from qos_mcp.core.plant import LoadSeries
from qos_mcp.core.statespace import ModelAnalysis, Trajectory

SERIES_FILE = "series.csv"
REPORT_FILE = "report.txt"
HISTOGRAM_FILE = "histogram.csv"
CLASS_HISTOGRAM_FILE = "class_histograms.csv"
COMPARISON_FILE = "comparison.txt"

SERIES_COLUMNS = (
    "tick",
    "class_id",
    "offered",
    "backlog_before",
    "carried",
    "backlog_after",
    "dropped",
    "width",
    "utilization",
)
TRACE_COLUMNS = ("tick", "class_id", "offered_load")


def fmt(value: float) -> str:
    """Stable text form of a float for result files."""
    return f"{value:.12g}"


def _csv_text(header: Iterable[str], rows: Iterable[Iterable[object]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def series_csv(series: LoadSeries) -> str:
    """One row per tick per class, classes in scenario order."""
    rows = []
    for measurement in series:
        utilization = fmt(measurement.utilization)
        for c in measurement.classes:
            rows.append(
                [
                    measurement.tick,
                    c.class_id,
                    fmt(c.offered),
                    fmt(c.backlog_before),
                    fmt(c.carried),
                    fmt(c.backlog_after),
                    fmt(c.dropped),
                    fmt(c.width),
                    utilization,
                ]
            )
    return _csv_text(SERIES_COLUMNS, rows)


def histogram_csv(hist: LoadHistogram) -> str:
    return _csv_text(
        ("bin_lo", "bin_hi", "frequency"),
        ([fmt(lo), fmt(hi), fmt(freq)] for lo, hi, freq in hist.rows()),
    )


def class_histograms_csv(histograms: Mapping[str, LoadHistogram]) -> str:
    rows = []
    for class_id, hist in histograms.items():
        rows.extend([class_id, fmt(lo), fmt(hi), fmt(freq)] for lo, hi, freq in hist.rows())
    return _csv_text(("class_id", "bin_lo", "bin_hi", "frequency"), rows)


def trace_csv(series: LoadSeries) -> str:
    """Offered loads of a run as a trace file, so a run can be replayed as trace sources."""
    rows = [
        [measurement.tick, c.class_id, repr(float(c.offered))]
        for measurement in series
        for c in measurement.classes
    ]
    return _csv_text(TRACE_COLUMNS, rows)


def _parse_float(cell: str, what: str, source: str, line: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ScenarioFileError(f"{what} '{cell}' is not a number", source, line)
    if not math.isfinite(value):
        raise ScenarioFileError(f"{what} must be finite, got {cell}", source, line)
    return value


def read_trace(text: str, source: str = "<trace>") -> dict[str, list[float]]:
    """
    Parse `tick,class_id,offered_load` rows into per-class sample lists.

    A header row is optional. Ticks must run contiguously from 0 for each class.
    """
    samples: dict[str, list[float]] = {}
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        cells = [cell.strip() for cell in row]
        if line_no == 1 and cells[0] == "tick":
            continue
        if len(cells) != 3:
            raise ScenarioFileError(f"expected 3 columns (tick,class_id,offered_load), got {len(cells)}", source, line_no)
        tick_cell, class_id, load_cell = cells
        try:
            tick = int(tick_cell)
        except ValueError:
            raise ScenarioFileError(f"tick '{tick_cell}' is not an integer", source, line_no)
        if not class_id:
            raise ScenarioFileError("empty class_id", source, line_no)
        load = _parse_float(load_cell, "offered_load", source, line_no)
        if load < 0:
            raise ScenarioFileError(f"offered_load must be >= 0, got {load_cell}", source, line_no)
        loads = samples.setdefault(class_id, [])
        if tick != len(loads):
            raise ScenarioFileError(
                f"tick {tick} for class '{class_id}' out of sequence, expected {len(loads)}",
                source,
                line_no,
            )
        loads.append(load)
    if not samples:
        raise ScenarioFileError("trace file has no samples", source)
    return samples


def trajectory_csv(traj: Trajectory) -> str:
    """`t,x1..xn,u1..um` rows; the final state has empty input cells. Floats use repr so files round-trip exactly."""
    header = ["t"] + [f"x{i + 1}" for i in range(traj.n)] + [f"u{j + 1}" for j in range(traj.m)]
    rows = []
    for t, state in enumerate(traj.states):
        inputs = traj.inputs[t] if t < len(traj.inputs) else [None] * traj.m
        rows.append(
            [t]
            + [repr(float(v)) for v in state]
            + ["" if v is None else repr(float(v)) for v in inputs]
        )
    return _csv_text(header, rows)


def read_trajectory(text: str, source: str = "<trajectory>") -> Trajectory:
    rows = [
        (line_no, [cell.strip() for cell in row])
        for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1)
        if row and any(cell.strip() for cell in row)
    ]
    if not rows:
        raise ScenarioFileError("trajectory file is empty", source)
    header_line, header = rows[0]
    if not header or header[0] != "t":
        raise ScenarioFileError("header must start with 't' followed by x1..xn and u1..um", source, header_line)
    n = sum(1 for name in header[1:] if name.startswith("x"))
    m = sum(1 for name in header[1:] if name.startswith("u"))
    expected = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    if header != expected or n == 0:
        raise ScenarioFileError(f"header must be {','.join(expected) if n else 't,x1,...'}", source, header_line)

    states, inputs = [], []
    data = rows[1:]
    for position, (line_no, cells) in enumerate(data):
        if len(cells) != 1 + n + m:
            raise ScenarioFileError(f"expected {1 + n + m} columns, got {len(cells)}", source, line_no)
        if cells[0] != str(position):
            raise ScenarioFileError(f"expected t = {position}, got '{cells[0]}'", source, line_no)
        states.append([_parse_float(c, "state", source, line_no) for c in cells[1 : 1 + n]])
        input_cells = cells[1 + n :]
        last = position == len(data) - 1
        if last:
            if any(input_cells):
                raise ScenarioFileError("the final row carries no inputs; leave its u cells empty", source, line_no)
        else:
            inputs.append([_parse_float(c, "input", source, line_no) for c in input_cells])
    if not states:
        raise ScenarioFileError("trajectory file has no samples", source)
    return Trajectory(np.array(states, dtype=float), np.array(inputs, dtype=float).reshape(len(inputs), m))


def format_report(report: RunReport, title: str = "run report") -> str:
    lines = [
        f"== {title} ==",
        f"ticks:             {report.ticks}",
        f"capacity:          {fmt(report.capacity)}",
        f"offered:           {fmt(report.offered)}",
        f"carried:           {fmt(report.carried)}",
        f"dropped:           {fmt(report.dropped)}",
        f"drop_ratio:        {fmt(report.drop_ratio)}",
        f"tail_mass(>{fmt(report.tail_threshold)}): {fmt(report.tail_mass)}",
        f"peak_utilization:  {fmt(report.peak_utilization)}",
        f"mean_utilization:  {fmt(report.mean_utilization)}",
        f"activations:       {report.activations}",
        "",
        "class,offered,carried,dropped,drop_ratio,final_backlog",
    ]
    for c in report.classes:
        lines.append(
            ",".join(
                [c.class_id, fmt(c.offered), fmt(c.carried), fmt(c.dropped), fmt(c.drop_ratio), fmt(c.final_backlog)]
            )
        )
    return "\n".join(lines) + "\n"


def format_comparison(comparison: ComparisonReport) -> str:
    lines = [
        "== comparison: without control -> with control ==",
        "metric,without,with,delta,ratio,improved",
    ]
    for metric in comparison.metrics:
        lines.append(
            ",".join(
                [
                    metric.name,
                    fmt(metric.base),
                    fmt(metric.controlled),
                    fmt(metric.delta),
                    "inf" if math.isinf(metric.ratio) else fmt(metric.ratio),
                    "yes" if metric.improved else "no",
                ]
            )
        )
    lines.append("")
    lines.append(f"improved: {'yes' if comparison.improved else 'no'}")
    return "\n".join(lines) + "\n"


def _format_eigenvalue(value: complex) -> str:
    if value.imag == 0:
        return fmt(value.real)
    sign = "+" if value.imag > 0 else "-"
    return f"{fmt(value.real)}{sign}{fmt(abs(value.imag))}j"


def format_analysis(analysis: ModelAnalysis) -> str:
    lines = [
        f"spectral_radius: {fmt(analysis.spectral_radius)}",
        f"stability: {'stable' if analysis.stable else 'not stable'}",
        f"controllability_rank: {analysis.controllability_rank}/{analysis.n}",
        f"controllability: {'controllable' if analysis.controllable else 'not controllable'}",
        f"observability_rank: {analysis.observability_rank}/{analysis.n}",
        f"observability: {'observable' if analysis.observable else 'not observable'}",
    ]
    if analysis.reach_steps is not None:
        lines.append(f"reachability_rank({analysis.reach_steps} steps): {analysis.reach_rank}/{analysis.n}")
    lines.append("")
    lines.append("eigenvalue,magnitude,behaviour,oscillatory")
    for mode in analysis.modes:
        lines.append(
            ",".join(
                [
                    _format_eigenvalue(mode.eigenvalue),
                    fmt(mode.magnitude),
                    mode.behaviour,
                    "yes" if mode.oscillatory else "no",
                ]
            )
        )
    return "\n".join(lines) + "\n"
