import logging
import os
import sys

# Import all modules to register their tools and prompts with MCP
import qos_mcp.prompts.control_experiment_prompt  # noqa: F401
import qos_mcp.tools.analysis_tools  # noqa: F401
import qos_mcp.tools.experiment_tools  # noqa: F401
import qos_mcp.tools.instructions  # noqa: F401
import qos_mcp.tools.scenario_files  # noqa: F401
from qos_mcp.config import log_level, mcp, working_directory
from qos_mcp.utils.logging_utils import configure_logging

logger = logging.getLogger(__name__)


def init_environment() -> None:
    """
    Initialize the environment: require a working directory and set up logging to stderr.
    """
    configure_logging(log_level)
    if len(sys.argv) < 2:
        logger.error("Working directory not specified.")
        sys.exit(1)
    if not os.path.isdir(working_directory):
        logger.error("Working directory %s does not exist.", working_directory)
        sys.exit(1)
    logger.info("serving QoS feedback tools for %s", os.path.abspath(working_directory))


def main():
    init_environment()
    mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
