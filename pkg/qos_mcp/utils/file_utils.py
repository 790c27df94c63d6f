"""
Utilities for file operations in the qos-feedback-mcp project.
Contains helper functions for reading inputs robustly and writing result files safely.
"""

import difflib
import logging
import os

from qos_mcp.core.errors import InputError, ScenarioFileError, SimulationError

logger = logging.getLogger(__name__)


def ensure_path_in_working_directory(path: str, working_directory: str) -> str:
    """
    Ensure a file path is within the working directory.

    Args:
        path (str): The path to check; relative paths resolve against the working directory.
        working_directory (str): The working directory.

    Returns:
        str: The absolute path.

    Raises:
        ValueError: If the path is outside of the working directory.
    """
    base = os.path.abspath(working_directory)
    full_path = os.path.abspath(os.path.join(base, path))
    if os.path.commonpath([full_path, base]) != base:
        raise ValueError("Attempt to access files outside of the working directory.")
    return full_path


def get_file_content(file_path: str) -> str:
    """
    Reads the content of a file with robust error handling.

    Args:
        file_path (str): The path to the file to read.

    Returns:
        str: The file's content.

    Raises:
        ScenarioFileError: If the file is missing, unreadable or undecodable.
    """
    try:
        with open(file_path, encoding="utf-8") as f:
            return f.read()
    except UnicodeDecodeError:
        # Try with different encodings if UTF-8 fails
        for encoding in ("utf-8-sig", "cp1252"):
            try:
                with open(file_path, encoding=encoding) as f:
                    return f.read()
            except UnicodeDecodeError:
                continue
        raise ScenarioFileError("could not decode file with any supported encoding", file_path)
    except OSError as e:
        raise ScenarioFileError(f"cannot read file: {e.strerror or e}", file_path)


def write_output_file(directory: str, name: str, content: str) -> str:
    """
    Write one result file into an output directory, creating the directory.

    Returns:
        str: The path written.

    Raises:
        SimulationError: If the file cannot be written.
    """
    path = os.path.join(directory, name)
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
    except OSError as e:
        raise SimulationError(f"cannot write {path}: {e.strerror or e}")
    return path


def generate_file_previews(new_content: str, current_content: str | None = None):
    """
    Generate preview or diff of file content for dry run mode.

    Args:
        new_content: New content for the file
        current_content: Current content of the file (for diff)

    Returns:
        dict: Structured data with file preview or diff information
    """
    if current_content:
        return {"type": "diff", "content": generate_diff(current_content, new_content)}

    content_lines = new_content.splitlines()
    preview_lines = content_lines[: min(20, len(content_lines))]
    return {
        "type": "new_file",
        "content": "\n".join(preview_lines),
        "truncated": len(content_lines) > 20,
        "total_lines": len(content_lines),
    }


def generate_diff(current_content: str, new_content: str) -> str:
    """
    Generate a unified diff between current and new content.

    Args:
        current_content: The current file content
        new_content: The new file content to be written

    Returns:
        str: A formatted diff showing changes
    """
    diff = difflib.unified_diff(
        current_content.splitlines(),
        new_content.splitlines(),
        lineterm="",
        n=3,  # Context lines
    )
    return "\n".join(diff)


def write_file_safely(file_path: str, content: str, working_directory: str) -> str:
    """
    Writes content to a file, ensuring the path is within the working directory.

    Args:
        file_path (str): The path to the file.
        content (str): The content to write.
        working_directory (str): The working directory.

    Returns:
        str: Success message.

    Raises:
        InputError: If the path escapes the working directory or cannot be written.
    """
    try:
        full_file_path = ensure_path_in_working_directory(file_path, working_directory)
        os.makedirs(os.path.dirname(full_file_path), exist_ok=True)
        with open(full_file_path, "w", encoding="utf-8") as f:
            f.write(content)
    except (OSError, ValueError) as e:
        error_message = f"Error writing file: {e!s}"
        logger.error(error_message)
        raise InputError(error_message)
    return f"Successfully wrote file to {file_path}"
