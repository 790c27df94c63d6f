import json
import os

from qos_mcp.config import mcp, working_directory
from qos_mcp.core.metrics import DEFAULT_BINS, DEFAULT_TAIL_THRESHOLD
from qos_mcp.utils.command_utils import run_cli_command
from qos_mcp.utils.file_utils import ensure_path_in_working_directory
from qos_mcp.utils.output_utils import (
    COMPARISON_FILE,
    HISTOGRAM_FILE,
    REPORT_FILE,
    SERIES_FILE,
)


def _experiment_command(
    verb: str,
    scenario_path: str,
    output_dir: str,
    overrides: list[str] | None,
    seed: int | None,
    bins: int,
    tail_threshold: float,
) -> tuple[list[str], str]:
    """Build a qos-feedback command with every path confined to the working directory."""
    scenario = ensure_path_in_working_directory(scenario_path, working_directory)
    out_dir = ensure_path_in_working_directory(output_dir, working_directory)
    command = [
        "qos-feedback",
        verb,
        scenario,
        "--out",
        out_dir,
        "--bins",
        str(bins),
        "--tail-threshold",
        str(tail_threshold),
    ]
    if seed is not None:
        command.extend(["--seed", str(seed)])
    for override in overrides or []:
        command.extend(["--set", override])
    return command, out_dir


@mcp.tool()
def run_experiment(
    scenario_path: str,
    output_dir: str = "results",
    overrides: list[str] | None = None,
    seed: int | None = None,
    bins: int = DEFAULT_BINS,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
) -> str:
    """
    Simulates one scenario file and writes series.csv, report.txt and histogram.csv.
    <important>Make Sure you have Called FIRST_STEP_get_instructions first before this tool.</important>

    Args:
        scenario_path (str): Scenario YAML file, relative to the working directory.
        output_dir (str): Directory for the result files, relative to the working directory.
        overrides (list[str], optional): `dotted.key=value` assignments, e.g. "controller.enabled=false".
        seed (int, optional): Replaces channel.seed.
        bins (int): Number of utilization histogram bins.
        tail_threshold (float): Utilization above which samples count toward the tail mass.

    Returns:
        str: JSON string with the run report and the paths written.
    """
    try:
        command, out_dir = _experiment_command(
            "run", scenario_path, output_dir, overrides, seed, bins, tail_threshold
        )
        report = run_cli_command(command)
        return json.dumps(
            {
                "success": True,
                "message": f"Scenario '{scenario_path}' simulated.",
                "instructions": "Inform User: Summarize drops, tail mass and activations from the report.",
                "data": {
                    "report": report,
                    "files": [os.path.join(out_dir, name) for name in (SERIES_FILE, REPORT_FILE, HISTOGRAM_FILE)],
                },
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to run scenario '{scenario_path}'.",
                "instructions": (
                    "Inform User: The scenario could not be simulated. "
                    "The error names the file line and key to fix; see scenario_file.md from FIRST_STEP_get_instructions."
                ),
                "error": str(e),
            },
            indent=2,
        )


@mcp.tool()
def compare_experiments(
    scenario_path: str,
    output_dir: str = "comparison",
    overrides: list[str] | None = None,
    seed: int | None = None,
    bins: int = DEFAULT_BINS,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
) -> str:
    """
    Runs a scenario without and with feedback control under identical seeds and compares them.
    Results go to `<output_dir>/uncontrolled/`, `<output_dir>/controlled/` and `<output_dir>/comparison.txt`.

    Args:
        scenario_path (str): Scenario YAML file, relative to the working directory.
        output_dir (str): Directory for the result files, relative to the working directory.
        overrides (list[str], optional): `dotted.key=value` assignments applied to both runs.
        seed (int, optional): Replaces channel.seed.
        bins (int): Number of utilization histogram bins.
        tail_threshold (float): Utilization above which samples count toward the tail mass.

    Returns:
        str: JSON string with the comparison table and whether control improved drops and tail mass.
    """
    try:
        command, out_dir = _experiment_command(
            "compare", scenario_path, output_dir, overrides, seed, bins, tail_threshold
        )
        comparison = run_cli_command(command)
        improved = "improved: yes" in comparison
        return json.dumps(
            {
                "success": True,
                "message": f"Comparison of '{scenario_path}' completed.",
                "instructions": (
                    "Inform User: Present the comparison table. "
                    + (
                        "Control reduced both drops and tail mass."
                        if improved
                        else "Control did not reduce both drops and tail mass; suggest adjusting threshold, beta or horizon."
                    )
                ),
                "data": {
                    "comparison": comparison,
                    "improved": improved,
                    "comparison_file": os.path.join(out_dir, COMPARISON_FILE),
                },
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to compare scenario '{scenario_path}'.",
                "instructions": "Inform User: The comparison could not be run. Fix the reported error and retry.",
                "error": str(e),
            },
            indent=2,
        )
