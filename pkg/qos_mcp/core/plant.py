"""
Discrete-time fluid model of the shared channel.

Each tick every class offers load, carries up to its width, queues the rest up
to its buffer and drops the excess. With control enabled the feedback
controller runs after the measurement and its widths apply from the next tick.
"""

import logging
import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qos_mcp.core.controller import (
    AllocationState,
    ControlDecision,
    ControllerConfig,
    FeedbackController,
    TrafficClassSpec,
)
from qos_mcp.core.errors import InputError, TraceExhaustedError
from qos_mcp.core.forecast import LoadHistory

logger = logging.getLogger(__name__)

_SOURCE_MODEL = ConfigDict(extra="forbid", frozen=True)


class ConstantSource(BaseModel):
    model_config = _SOURCE_MODEL

    kind: Literal["constant"] = "constant"
    rate: float = Field(ge=0.0, allow_inf_nan=False)


class OnOffSource(BaseModel):
    """on_len ticks at on_rate then off_len ticks at off_rate; phase shifts the cycle start."""

    model_config = _SOURCE_MODEL

    kind: Literal["on-off"] = "on-off"
    on_rate: float = Field(ge=0.0, allow_inf_nan=False)
    off_rate: float = Field(0.0, ge=0.0, allow_inf_nan=False)
    on_len: int = Field(ge=1)
    off_len: int = Field(ge=0)
    phase: int = Field(0, ge=0)


class PoissonSource(BaseModel):
    model_config = _SOURCE_MODEL

    kind: Literal["poisson"] = "poisson"
    mean: float = Field(ge=0.0, allow_inf_nan=False)
    seed: int | None = Field(None, ge=0)


class TraceSource(BaseModel):
    """Recorded offered loads, inline or read from a trace file (`file` is kept for re-emission)."""

    model_config = _SOURCE_MODEL

    kind: Literal["trace"] = "trace"
    samples: list[Annotated[float, Field(ge=0.0, allow_inf_nan=False)]] = Field(min_length=1)
    file: str | None = None
    loop: bool = False


TrafficSource = Annotated[
    ConstantSource | OnOffSource | PoissonSource | TraceSource, Field(discriminator="kind")
]


class ChannelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    capacity: float = Field(gt=0.0, allow_inf_nan=False)
    ticks: int = Field(ge=1)
    seed: int = Field(0, ge=0)


class ScenarioClass(TrafficClassSpec):
    """A traffic class with its queue and source; buffer_size defaults to twice the initial width."""

    buffer_size: float | None = Field(None, ge=0.0, allow_inf_nan=False)
    source: TrafficSource

    @property
    def buffer(self) -> float:
        return 2.0 * self.initial_width if self.buffer_size is None else self.buffer_size

    def traffic_spec(self) -> TrafficClassSpec:
        return TrafficClassSpec(
            class_id=self.class_id,
            priority=self.priority,
            critical_min_width=self.critical_min_width,
            initial_width=self.initial_width,
        )


class ScenarioSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    channel: ChannelSpec
    classes: list[ScenarioClass] = Field(min_length=1)
    controller: ControllerConfig = Field(default_factory=ControllerConfig)

    @model_validator(mode="after")
    def _consistent_classes(self):
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"class ids must be distinct, got {ids}")
        priorities = [c.priority for c in self.classes]
        if len(set(priorities)) != len(priorities):
            raise ValueError(f"priorities must be distinct, got {priorities}")
        if math.fsum(c.initial_width for c in self.classes) > self.channel.capacity:
            raise ValueError("initial widths exceed channel capacity")
        if math.fsum(c.critical_min_width for c in self.classes) > self.channel.capacity:
            raise ValueError("critical minimum widths exceed channel capacity")
        return self

    @property
    def control_enabled(self) -> bool:
        return self.controller.enabled

    @property
    def traffic_specs(self) -> list[TrafficClassSpec]:
        return [c.traffic_spec() for c in self.classes]


@dataclass
class ClassQueue:
    class_id: str
    buffer_size: float
    backlog: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.backlog <= self.buffer_size:
            raise InputError(
                f"backlog {self.backlog} of '{self.class_id}' outside [0, {self.buffer_size}]"
            )


@dataclass(frozen=True)
class ClassMeasurement:
    class_id: str
    offered: float
    backlog_before: float
    carried: float
    backlog_after: float
    dropped: float
    width: float

    @property
    def conservation_error(self) -> float:
        return math.fsum(
            [self.offered, self.backlog_before, -self.carried, -self.backlog_after, -self.dropped]
        )


@dataclass(frozen=True)
class Measurement:
    tick: int
    capacity: float
    classes: tuple[ClassMeasurement, ...]

    @property
    def carried(self) -> float:
        return math.fsum(c.carried for c in self.classes)

    @property
    def utilization(self) -> float:
        return self.carried / self.capacity

    def by_class(self) -> dict[str, ClassMeasurement]:
        return {c.class_id: c for c in self.classes}


LoadSeries = list[Measurement]


@dataclass(frozen=True)
class ScenarioRun:
    series: LoadSeries
    decisions: list[ControlDecision]

    @property
    def activations(self) -> int:
        return sum(1 for d in self.decisions if d.activated)


def derive_seed(master_seed: int, index: int) -> int:
    """Per-class seed derived from the scenario's master seed."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def generate(source: TrafficSource, t: int, seed: int = 0) -> float:
    """
    Offered load of a source at tick t.

    Deterministic in (source, seed, t): poisson draws use a generator seeded by
    (seed, t), so any tick can be evaluated independently.
    """
    if t < 0:
        raise InputError(f"tick must be >= 0, got {t}")
    match source:
        case ConstantSource(rate=rate):
            return float(rate)
        case OnOffSource():
            position = (t + source.phase) % (source.on_len + source.off_len)
            return float(source.on_rate if position < source.on_len else source.off_rate)
        case PoissonSource(mean=mean):
            rng = np.random.default_rng([seed if source.seed is None else source.seed, t])
            return float(rng.poisson(mean))
        case TraceSource(samples=samples, loop=loop):
            if t >= len(samples):
                if not loop:
                    raise TraceExhaustedError(
                        f"trace of {len(samples)} samples exhausted at tick {t}; set loop: true to repeat it"
                    )
                return float(samples[t % len(samples)])
            return float(samples[t])
    raise InputError(f"unsupported source {source!r}")


def channel_tick(
    offered: Mapping[str, float],
    widths: Mapping[str, float],
    queues: Mapping[str, ClassQueue],
    tick: int = 0,
    capacity: float | None = None,
) -> Measurement:
    """
    Serve one tick: carried = min(offered + backlog, width), the remainder is
    queued up to the buffer and the excess dropped. Updates queues in place.
    """
    results = []
    for class_id, load in offered.items():
        if not (math.isfinite(load) and load >= 0):
            raise InputError(f"offered load of '{class_id}' must be finite and >= 0, got {load}")
        queue = queues[class_id]
        width = widths[class_id]
        before = queue.backlog
        demand = load + before
        carried = min(demand, width)
        remainder = demand - carried
        backlog = min(remainder, queue.buffer_size)
        dropped = remainder - backlog
        queue.backlog = backlog
        results.append(ClassMeasurement(class_id, load, before, carried, backlog, dropped, width))
    if capacity is None:
        capacity = math.fsum(widths.values())
    return Measurement(tick, capacity, tuple(results))


def run_scenario(spec: ScenarioSpec) -> ScenarioRun:
    """Simulate the scenario tick by tick; deterministic given its seeds."""
    capacity = spec.channel.capacity
    seeds = {c.class_id: derive_seed(spec.channel.seed, i) for i, c in enumerate(spec.classes)}
    queues = {c.class_id: ClassQueue(c.class_id, c.buffer) for c in spec.classes}
    alloc = AllocationState(capacity, {c.class_id: c.initial_width for c in spec.classes})
    alloc.check_minimums(spec.traffic_specs)

    controller = None
    histories: dict[str, deque] = {}
    if spec.control_enabled:
        controller = FeedbackController(spec.traffic_specs, spec.controller)
        keep = spec.controller.window + 1
        histories = {c.class_id: deque(maxlen=keep) for c in spec.classes}

    logger.info(
        "running %d ticks, %d classes, control %s",
        spec.channel.ticks,
        len(spec.classes),
        "on" if controller else "off",
    )
    series: LoadSeries = []
    decisions: list[ControlDecision] = []
    for t in range(spec.channel.ticks):
        offered = {c.class_id: generate(c.source, t, seeds[c.class_id]) for c in spec.classes}
        series.append(channel_tick(offered, alloc.widths, queues, t, capacity))
        if controller is None:
            continue
        for class_id, load in offered.items():
            histories[class_id].append((t, load))
        snapshot = {cid: LoadHistory.from_pairs(cid, h) for cid, h in histories.items()}
        decision = controller.control_tick(t, offered, alloc, snapshot)
        decisions.append(decision)
        if decision.activated:
            # Actuation latency of one tick: new widths serve from t + 1.
            alloc = AllocationState(capacity, decision.new_widths)
    logger.info("finished %d ticks, %d activations", spec.channel.ticks, sum(d.activated for d in decisions))
    return ScenarioRun(series, decisions)


def replay_channel(
    offered_by_tick: Sequence[Mapping[str, float]],
    widths: Mapping[str, float],
    buffers: Mapping[str, float],
    capacity: float | None = None,
) -> LoadSeries:
    """channel_tick applied to a fixed offered-load sequence under constant widths."""
    queues = {cid: ClassQueue(cid, size) for cid, size in buffers.items()}
    return [
        channel_tick(offered, widths, queues, t, capacity)
        for t, offered in enumerate(offered_by_tick)
    ]
