"""
Exception hierarchy for the qos-feedback-mcp project.
Every error carries the CLI exit code it maps to.
"""


class QosError(Exception):
    """Base class for all domain errors."""

    exit_code = 2


class InputError(QosError):
    """Bad input: malformed files, wrong dimensions, values out of range."""

    exit_code = 1


class ScenarioFileError(InputError):
    """A scenario, model, trace or trajectory file failed to parse or validate."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        location = path or "<input>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message}")


class DimensionError(InputError):
    pass


class NonFiniteError(InputError):
    pass


class BoundsError(InputError):
    """A control vector lies outside the input box U."""


class UnknownClassError(InputError):
    pass


class SimulationError(QosError):
    exit_code = 2


class ForecastError(SimulationError):
    pass


class MissingForecastError(SimulationError):
    pass


class InconsistentClassesError(SimulationError):
    pass


class TraceExhaustedError(SimulationError):
    pass


class AllocationError(SimulationError):
    """An allocation violates capacity or critical minimum widths."""


class AnalysisError(QosError):
    exit_code = 3


class InsufficientSamplesError(AnalysisError):
    pass


class UnidentifiableError(AnalysisError):
    pass
