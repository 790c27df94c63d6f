import json

from qos_mcp.config import mcp, working_directory
from qos_mcp.core import statespace
from qos_mcp.utils.command_utils import run_cli_command
from qos_mcp.utils.file_utils import ensure_path_in_working_directory
from qos_mcp.utils.yaml_utils import RESIDUAL_COMMENT, load_model


@mcp.tool()
def analyze_model(model_path: str, reach_steps: int | None = None) -> str:
    """
    Reports spectral radius, stability, modes, controllability and observability of a model file.

    Args:
        model_path (str): Model YAML file, relative to the working directory.
        reach_steps (int, optional): Also report the rank of the reachability matrix for this many ticks.

    Returns:
        str: JSON string with the verdicts and the printed analysis.
    """
    try:
        path = ensure_path_in_working_directory(model_path, working_directory)
        analysis = statespace.analyze(load_model(path), reach_steps)
        command = ["qos-feedback", "analyze", path]
        if reach_steps is not None:
            command.extend(["--reach-steps", str(reach_steps)])
        return json.dumps(
            {
                "success": True,
                "message": f"Model '{model_path}' analyzed.",
                "data": {
                    "spectral_radius": analysis.spectral_radius,
                    "stable": analysis.stable,
                    "controllability_rank": analysis.controllability_rank,
                    "controllable": analysis.controllable,
                    "observability_rank": analysis.observability_rank,
                    "observable": analysis.observable,
                    "reach_rank": analysis.reach_rank,
                    "oscillatory_modes": sum(1 for mode in analysis.modes if mode.oscillatory),
                    "text": run_cli_command(command),
                },
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to analyze model '{model_path}'.",
                "instructions": "Inform User: Check the model file against model_file.md from FIRST_STEP_get_instructions.",
                "error": str(e),
            },
            indent=2,
        )


@mcp.tool()
def identify_model(trajectory_path: str, output_dir: str | None = None) -> str:
    """
    Fits A and B by least squares to a trajectory file and returns the model file text.

    Args:
        trajectory_path (str): Trajectory CSV file, relative to the working directory.
        output_dir (str, optional): Directory to write identified_model.yml into.

    Returns:
        str: JSON string with the identified model and the fit residual.
    """
    try:
        path = ensure_path_in_working_directory(trajectory_path, working_directory)
        command = ["qos-feedback", "identify", path]
        if output_dir:
            command.extend(["--out", ensure_path_in_working_directory(output_dir, working_directory)])
        model_text = run_cli_command(command)
        residual = None
        first_line = model_text.splitlines()[0] if model_text else ""
        if first_line.startswith(RESIDUAL_COMMENT):
            residual = float(first_line[len(RESIDUAL_COMMENT) :])
        return json.dumps(
            {
                "success": True,
                "message": f"Model identified from '{trajectory_path}'.",
                "data": {"model": model_text, "residual": residual},
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to identify a model from '{trajectory_path}'.",
                "instructions": (
                    "Inform User: Identification needs at least n + m + 1 samples whose states and "
                    "inputs are rich enough to fix A and B."
                ),
                "error": str(e),
            },
            indent=2,
        )


@mcp.tool()
def simulate_model(
    model_path: str,
    output_file: str,
    ticks: int = 100,
    seed: int = 0,
    x0: str | None = None,
) -> str:
    """
    Drives a model file with bounded random inputs and writes the trajectory file.

    Args:
        model_path (str): Model YAML file, relative to the working directory.
        output_file (str): Trajectory CSV to write, relative to the working directory.
        ticks (int): Number of inputs applied.
        seed (int): Seed of the input generator.
        x0 (str, optional): Initial state as comma-separated values; zeros when omitted.

    Returns:
        str: JSON string with the path written.
    """
    try:
        command = [
            "qos-feedback",
            "simulate",
            ensure_path_in_working_directory(model_path, working_directory),
            "--ticks",
            str(ticks),
            "--seed",
            str(seed),
            "--out",
            ensure_path_in_working_directory(output_file, working_directory),
        ]
        if x0:
            command.extend(["--x0", x0])
        output = run_cli_command(command)
        return json.dumps(
            {
                "success": True,
                "message": output.strip(),
                "instructions": "Inform User: The trajectory can be passed to identify_model.",
                "data": {"output_file": output_file},
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to simulate model '{model_path}'.",
                "instructions": "Inform User: The simulation failed.",
                "error": str(e),
            },
            indent=2,
        )
