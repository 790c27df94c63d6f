"""
QoS Feedback MCP - feedback bandwidth control lab for prioritized traffic classes
"""

try:
    from qos_mcp._version import __version__
except ImportError:
    __version__ = "0.0.0"  # Fallback version
