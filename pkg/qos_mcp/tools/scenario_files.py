# MCP tools for reading bundled scenarios and writing validated scenario files

import json
import os

from qos_mcp.config import mcp, working_directory
from qos_mcp.utils.file_utils import (
    ensure_path_in_working_directory,
    generate_file_previews,
    get_file_content,
    write_file_safely,
)
from qos_mcp.utils.yaml_utils import parse_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "scenarios")


def bundled_scenarios() -> dict[str, str]:
    """File name -> content of every scenario shipped with the package."""
    return {
        name: get_file_content(os.path.join(SCENARIO_DIR, name))
        for name in sorted(os.listdir(SCENARIO_DIR))
        if name.endswith((".yml", ".yaml"))
    }


@mcp.tool()
def list_bundled_scenarios() -> str:
    """
    Lists the scenarios shipped with the package together with their YAML content.
    Use one as a starting point for write_scenario_file.

    Returns:
        str: JSON string mapping file names to scenario documents.
    """
    try:
        scenarios = bundled_scenarios()
        return json.dumps(
            {
                "success": True,
                "message": f"Found {len(scenarios)} bundled scenarios.",
                "instructions": (
                    "Inform User: burst_two_class.yml shows control removing drops; "
                    "quiet_two_class.yml never activates the controller."
                ),
                "data": scenarios,
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": "Failed to list bundled scenarios.",
                "instructions": "Inform User: The package scenarios could not be read.",
                "error": str(e),
            },
            indent=2,
        )


@mcp.tool()
def write_scenario_file(file_path: str, content: str, dry_run: bool = True) -> str:
    """
    Writes a scenario YAML file after validating it.
    <important>Make Sure you have Called FIRST_STEP_get_instructions first before this tool.</important>

    Steps for a safe write:

    1. Always run with `dry_run=True` first.
    2. Show the user the preview or diff.
    3. Only if the user **explicitly confirms**, run again with `dry_run=False`.

    Args:
        file_path (str): Target file, relative to the working directory.
        content (str): Scenario YAML document.
        dry_run (bool): If True, validates and previews without writing. Default is True.

    Returns:
        str: JSON string with the preview (dry run) or the write result.
    """
    if not content:
        return json.dumps(
            {
                "success": False,
                "message": "No content provided for the scenario file.",
                "instructions": "Please provide a scenario document before proceeding.",
                "error": "content argument is empty.",
            },
            indent=2,
        )

    try:
        full_path = ensure_path_in_working_directory(file_path, working_directory)
    except ValueError as e:
        return json.dumps(
            {
                "success": False,
                "message": "Scenario path is outside the working directory.",
                "instructions": "Inform User: Please provide a path within the working directory.",
                "error": str(e),
            },
            indent=2,
        )

    try:
        spec = parse_scenario(content, file_path, os.path.dirname(full_path))
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": "Scenario document does not validate.",
                "instructions": "Fix the line and key named in the error, then call this tool again with dry_run=True.",
                "error": str(e),
            },
            indent=2,
        )

    summary = {
        "classes": [c.class_id for c in spec.classes],
        "capacity": spec.channel.capacity,
        "ticks": spec.channel.ticks,
        "control_enabled": spec.control_enabled,
    }
    if dry_run:
        current = get_file_content(full_path) if os.path.exists(full_path) else None
        return json.dumps(
            {
                "success": True,
                "message": "Dry run: the scenario validates. Nothing was written.",
                "instructions": (
                    "Inform User: Review the preview. "
                    "Ask User: Confirm before calling again with dry_run=False."
                ),
                "data": {"preview": generate_file_previews(content, current), "scenario": summary},
            },
            indent=2,
        )

    try:
        message = write_file_safely(full_path, content, working_directory)
        return json.dumps(
            {
                "success": True,
                "message": message,
                "instructions": "Inform User: The scenario can now be passed to run_experiment or compare_experiments.",
                "data": {"scenario": summary},
            },
            indent=2,
        )
    except Exception as e:
        return json.dumps(
            {
                "success": False,
                "message": f"Failed to write '{file_path}'.",
                "instructions": "Inform User: The file could not be written.",
                "error": str(e),
            },
            indent=2,
        )
