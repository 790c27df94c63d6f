"""
Utilities for YAML processing and validation in the qos-feedback-mcp project.
Scenario and model documents are parsed with PyYAML, validated with pydantic and
reported as `<file>:<line>: <dotted.key>: <message>` when they do not validate.
"""

import logging
import os
from typing import Any

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from qos_mcp.core.errors import InputError, QosError, ScenarioFileError
from qos_mcp.core.plant import ScenarioSpec
from qos_mcp.core.statespace import StateSpaceModel
from qos_mcp.utils.file_utils import get_file_content
from qos_mcp.utils.output_utils import read_trace

logger = logging.getLogger(__name__)

RESIDUAL_COMMENT = "# identified model, residual "

Path = tuple[str | int, ...]


def _line_map(text: str) -> dict[Path, int]:
    """1-based line of every key and list item in a YAML document, keyed by its path."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    lines: dict[Path, int] = {(): 1}

    def walk(node, path: Path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = path + (str(key_node.value),)
                lines[child] = key_node.start_mark.line + 1
                walk(value_node, child)
        elif isinstance(node, yaml.SequenceNode):
            for index, item in enumerate(node.value):
                child = path + (index,)
                lines[child] = item.start_mark.line + 1
                walk(item, child)

    if root is not None:
        walk(root, ())
    return lines


def _locate(loc: tuple, lines: dict[Path, int]) -> tuple[str, int]:
    """
    Map a pydantic error location onto the document.

    Locations of discriminated unions carry the tag (e.g. 'on-off') as an extra
    element that the document does not have; such elements are skipped.
    """
    path: Path = ()
    for position, element in enumerate(loc):
        candidate = path + (element,)
        tag = isinstance(element, str) and candidate not in lines and position < len(loc) - 1
        if not tag:
            path = candidate
    line = 1
    for end in range(len(path), -1, -1):
        if path[:end] in lines:
            line = lines[path[:end]]
            break
    dotted = ".".join(str(part) for part in path) or "<root>"
    return dotted, line


def _validation_failure(error: ValidationError, text: str, source: str) -> ScenarioFileError:
    lines = _line_map(text)
    problems = error.errors()
    first = problems[0]
    dotted, line = _locate(tuple(first["loc"]), lines)
    message = f"{dotted}: {first['msg']}"
    if len(problems) > 1:
        message += f" (and {len(problems) - 1} more)"
    return ScenarioFileError(message, source, line)


def _load_document(text: str, source: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise ScenarioFileError(f"invalid YAML: {e.problem}", source, mark.line + 1 if mark else None)
    except yaml.YAMLError as e:
        raise ScenarioFileError(f"invalid YAML: {e}", source)
    if data is None:
        raise ScenarioFileError("document is empty", source, 1)
    if not isinstance(data, dict):
        raise ScenarioFileError("document must be a mapping", source, 1)
    return data


def parse_override(assignment: str) -> tuple[list[str], Any]:
    """Split `dotted.key=value`; the value is read as a YAML scalar."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key.strip():
        raise InputError(f"override '{assignment}' must look like dotted.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError:
        value = raw
    return key.strip().split("."), value


def _child_key(container: Any, part: str, trail: str):
    if isinstance(container, dict):
        if container.get(part) is None:
            container[part] = {}
        return part
    if isinstance(container, list):
        if part.lstrip("-").isdigit():
            index = int(part)
            if not 0 <= index < len(container):
                raise InputError(f"override index '{trail}' out of range")
            return index
        for index, item in enumerate(container):
            if isinstance(item, dict) and str(item.get("class_id")) == part:
                return index
        raise InputError(f"override key '{trail}' names no list element")
    raise InputError(f"override key '{trail}' does not exist")


def apply_overrides(document: dict[str, Any], overrides: list[str] | tuple[str, ...]) -> dict[str, Any]:
    """
    Apply `--set` assignments to a raw document in place.

    List elements are addressed by index or, for lists of classes, by class_id.
    Missing mappings are created on the way; keys the schema does not know are
    rejected by validation. List elements must exist.
    """
    for assignment in overrides:
        parts, value = parse_override(assignment)
        container: Any = document
        for depth, part in enumerate(parts[:-1]):
            key = _child_key(container, part, ".".join(parts[: depth + 1]))
            container = container[key]
        last = parts[-1]
        if isinstance(container, dict):
            container[last] = value
        else:
            container[_child_key(container, last, ".".join(parts))] = value
        logger.debug("override %s = %r", ".".join(parts), value)
    return document


def _resolve_traces(document: dict[str, Any], text: str, base_dir: str | None, source: str) -> None:
    """Replace `file:` references of trace sources by the samples of their class."""
    cache: dict[str, dict[str, list[float]]] = {}
    for index, entry in enumerate(document.get("classes") or []):
        if not isinstance(entry, dict):
            continue
        src = entry.get("source")
        if not (isinstance(src, dict) and src.get("kind") == "trace" and src.get("file")):
            continue
        path = str(src["file"])
        if not os.path.isabs(path):
            path = os.path.join(base_dir or os.getcwd(), path)
        if path not in cache:
            cache[path] = read_trace(get_file_content(path), path)
        class_id = str(entry.get("class_id"))
        if class_id not in cache[path]:
            dotted, line = _locate(("classes", index, "source", "file"), _line_map(text))
            raise ScenarioFileError(
                f"{dotted}: trace {src['file']} has no rows for class '{class_id}'", source, line
            )
        src["samples"] = cache[path][class_id]


def parse_scenario(
    text: str,
    source: str = "<scenario>",
    base_dir: str | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    seed: int | None = None,
) -> ScenarioSpec:
    document = _load_document(text, source)
    apply_overrides(document, overrides)
    if seed is not None:
        channel = document.setdefault("channel", {})
        if isinstance(channel, dict):
            channel["seed"] = seed
    _resolve_traces(document, text, base_dir, source)
    try:
        return ScenarioSpec.model_validate(document)
    except ValidationError as e:
        raise _validation_failure(e, text, source)


def load_scenario(
    path: str, overrides: list[str] | tuple[str, ...] = (), seed: int | None = None
) -> ScenarioSpec:
    text = get_file_content(path)
    return parse_scenario(text, path, os.path.dirname(os.path.abspath(path)), overrides, seed)


def emit_scenario(spec: ScenarioSpec) -> str:
    """Scenario document for a spec; trace sources that came from a file keep only the file reference."""
    document = spec.model_dump(mode="json", exclude_none=True)
    for entry in document["classes"]:
        src = entry["source"]
        if src.get("kind") == "trace" and src.get("file"):
            src.pop("samples", None)
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=None)


def scenario_round_trips(spec: ScenarioSpec, base_dir: str | None = None) -> bool:
    return parse_scenario(emit_scenario(spec), base_dir=base_dir) == spec


class ModelDocument(BaseModel):
    """Model file: dimensions n, m, p with row-major A, B, C and optional bounds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int
    m: int
    p: int | None = None
    A: list[list[float]]
    B: list[list[float]]
    C: list[list[float]] | None = None
    state_bounds: list[list[float]] | None = None
    input_bounds: list[list[float]] | None = None

    @field_validator("n", "m")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("state_bounds", "input_bounds")
    @classmethod
    def _pairs(cls, value: list[list[float]] | None) -> list[list[float]] | None:
        if value is not None:
            for row in value:
                if len(row) != 2:
                    raise ValueError("every bound is a [lo, hi] pair")
        return value

    @model_validator(mode="after")
    def _shapes(self):
        def check(name: str, rows: list[list[float]] | None, height: int, width: int):
            if rows is None:
                return
            if len(rows) != height or any(len(row) != width for row in rows):
                raise ValueError(f"{name} must be {height}x{width}")

        check("A", self.A, self.n, self.n)
        check("B", self.B, self.n, self.m)
        if self.C is not None:
            check("C", self.C, self.p if self.p is not None else len(self.C), self.n)
        elif self.p not in (None, self.n):
            raise ValueError(f"p = {self.p} requires an explicit C")
        check("state_bounds", self.state_bounds, self.n, 2)
        check("input_bounds", self.input_bounds, self.m, 2)
        return self

    def to_model(self) -> StateSpaceModel:
        return StateSpaceModel(
            A=np.array(self.A, dtype=float),
            B=np.array(self.B, dtype=float).reshape(self.n, self.m),
            C=None if self.C is None else np.array(self.C, dtype=float),
            state_bounds=None if self.state_bounds is None else np.array(self.state_bounds, dtype=float),
            input_bounds=None if self.input_bounds is None else np.array(self.input_bounds, dtype=float),
        )


def parse_model(text: str, source: str = "<model>") -> StateSpaceModel:
    document = _load_document(text, source)
    try:
        parsed = ModelDocument.model_validate(document)
    except ValidationError as e:
        raise _validation_failure(e, text, source)
    try:
        return parsed.to_model()
    except ScenarioFileError:
        raise
    except QosError as e:
        raise ScenarioFileError(str(e), source)


def load_model(path: str) -> StateSpaceModel:
    return parse_model(get_file_content(path), path)


def _bounds_rows(bounds: np.ndarray) -> list[list[float]] | None:
    if np.all(np.isinf(bounds[:, 0])) and np.all(np.isinf(bounds[:, 1])):
        return None
    return [[float(lo), float(hi)] for lo, hi in bounds]


def emit_model(model: StateSpaceModel, residual: float | None = None) -> str:
    document: dict[str, Any] = {
        "n": model.n,
        "m": model.m,
        "p": model.p,
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
    }
    for name in ("state_bounds", "input_bounds"):
        rows = _bounds_rows(getattr(model, name))
        if rows is not None:
            document[name] = rows
    header = ""
    if residual is not None:
        header = f"{RESIDUAL_COMMENT}{residual!r}\n"
    return header + yaml.safe_dump(document, sort_keys=False, default_flow_style=None)
