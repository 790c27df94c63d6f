"""
Utilities for running qos-feedback commands in the qos-feedback-mcp project.
MCP tools drive the same click commands the terminal uses, in-process.
"""

from click.testing import CliRunner

from qos_mcp.cli import cli


class CommandError(Exception):
    """A qos-feedback command exited with a non-zero code."""

    def __init__(self, output: str, exit_code: int):
        self.output = output
        self.exit_code = exit_code
        super().__init__(output.strip() or f"command failed with exit code {exit_code}")


def run_cli_command(command: list[str]) -> str:
    """
    Runs a qos-feedback command using the Click test runner.

    Args:
        command (List[str]): The command as a list of strings, starting with 'qos-feedback'.

    Returns:
        str: The output from the command execution.

    Raises:
        CommandError: If the command is not a qos-feedback command or exits non-zero.
    """
    if not command or command[0] != "qos-feedback":
        raise CommandError("Error: Only 'qos-feedback' commands are allowed.", 1)

    runner = CliRunner()

    # Remove the leading program name to align with the Click command structure
    result = runner.invoke(cli, command[1:])

    if result.exit_code != 0:
        if result.exception is not None and not isinstance(result.exception, SystemExit):
            raise CommandError(f"{result.output}{result.exception!r}", result.exit_code)
        raise CommandError(result.output, result.exit_code)
    return result.output
