import os

from qos_mcp.config import mcp


@mcp.prompt(name="Control Experiment")
def control_experiment() -> str:
    """
    Walks an agent through designing a scenario and comparing it with and without feedback control.
    Reads from the `control_experiment.md` file.

    Returns:
        The content of the prompt read from the markdown file.
    """
    try:
        file_path = os.path.join(os.path.dirname(__file__), "control_experiment.md")
        with open(file_path, encoding="utf-8") as file:
            return file.read()
    except FileNotFoundError:
        return "Error: The `control_experiment.md` file was not found."
