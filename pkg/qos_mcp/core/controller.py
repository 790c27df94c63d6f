"""
Feedback reallocation of channel widths between prioritized traffic classes.

The loop: monitor per-class utilization, activate once any class reaches the
threshold, forecast each class at the horizon, then release width from classes
trending down and grant it to classes trending up, seniors first, draining
juniors toward their critical minimum when released width runs out.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from qos_mcp.core.errors import (
    AllocationError,
    InconsistentClassesError,
    InputError,
    MissingForecastError,
    UnknownClassError,
)
from qos_mcp.core.forecast import (
    DEFAULT_DEAD_BAND,
    DEFAULT_HORIZON,
    DEFAULT_WINDOW,
    CandidateSpec,
    Forecast,
    ForecastConfig,
    ForecastMethod,
    LoadHistory,
    ModelBank,
    Trend,
    build_bank,
    predict,
    predict_with_bank,
)

logger = logging.getLogger(__name__)

# Absolute slack allowed when checking width sums and floors.
WIDTH_TOLERANCE = 1e-9


class TrafficClassSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    class_id: str = Field(min_length=1)
    priority: PositiveInt
    critical_min_width: float = Field(0.0, ge=0.0, allow_inf_nan=False)
    initial_width: float = Field(ge=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _initial_above_minimum(self):
        if self.initial_width < self.critical_min_width:
            raise ValueError(
                f"initial_width {self.initial_width} is below critical_min_width {self.critical_min_width}"
            )
        return self


class ControllerConfig(BaseModel):
    """Controller section of a scenario; window/horizon/method/dead_band configure forecasting."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    enabled: bool = True
    threshold: float = Field(0.7, gt=0.0, lt=1.0)
    threshold_basis: Literal["allocation", "channel"] = "allocation"
    beta: float = Field(1.1, gt=0.0, allow_inf_nan=False)
    cooldown: int = Field(1, ge=1)
    window: int = Field(DEFAULT_WINDOW, ge=2)
    horizon: int = Field(DEFAULT_HORIZON, ge=1)
    method: ForecastMethod = ForecastMethod.LINEAR_TREND
    dead_band: float = Field(DEFAULT_DEAD_BAND, ge=0.0, lt=1.0)
    bank: list[CandidateSpec] = Field(default_factory=list)

    @property
    def forecast(self) -> ForecastConfig:
        return ForecastConfig(
            window=self.window,
            horizon=self.horizon,
            method=self.method,
            dead_band=self.dead_band,
        )


@dataclass(frozen=True)
class AllocationState:
    capacity: float
    widths: Mapping[str, float]

    def __post_init__(self):
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise AllocationError(f"capacity must be positive and finite, got {self.capacity}")
        for class_id, width in self.widths.items():
            if not (math.isfinite(width) and width >= 0):
                raise AllocationError(f"width of '{class_id}' must be finite and >= 0, got {width}")
        total = math.fsum(self.widths.values())
        if total > self.capacity + WIDTH_TOLERANCE:
            raise AllocationError(f"widths sum to {total}, above capacity {self.capacity}")
        object.__setattr__(self, "widths", dict(self.widths))

    @property
    def slack(self) -> float:
        return max(0.0, self.capacity - math.fsum(self.widths.values()))

    def check_minimums(self, specs: Sequence[TrafficClassSpec]) -> None:
        for spec in specs:
            width = self.widths.get(spec.class_id)
            if width is None:
                raise InconsistentClassesError(f"no width allocated for class '{spec.class_id}'")
            if width < spec.critical_min_width - WIDTH_TOLERANCE:
                raise AllocationError(
                    f"width {width} of '{spec.class_id}' is below its critical minimum {spec.critical_min_width}"
                )


class EventKind(StrEnum):
    RELEASE = "release"
    GROW = "grow"
    DONATE = "donate"
    AT_MINIMUM = "at-minimum"
    INSUFFICIENT_CAPACITY = "insufficient-capacity"


@dataclass(frozen=True)
class ControlEvent:
    kind: EventKind
    class_id: str
    amount: float = 0.0
    # For DONATE: the class that received the width.
    beneficiary: str | None = None


@dataclass(frozen=True)
class ControlDecision:
    activated: bool
    new_widths: Mapping[str, float]
    events: tuple[ControlEvent, ...] = ()
    forecasts: Mapping[str, Forecast] = field(default_factory=dict)
    tick: int | None = None
    slack_before: float = 0.0

    @property
    def released(self) -> float:
        return math.fsum(e.amount for e in self.events if e.kind is EventKind.RELEASE)

    @property
    def donated(self) -> float:
        return math.fsum(e.amount for e in self.events if e.kind is EventKind.DONATE)

    @property
    def granted(self) -> float:
        return math.fsum(e.amount for e in self.events if e.kind is EventKind.GROW)


def seniority_order(specs: Sequence[TrafficClassSpec]) -> list[TrafficClassSpec]:
    """Most senior first: ascending priority number, then class_id."""
    return sorted(specs, key=lambda spec: (spec.priority, spec.class_id))


def needs_control(
    loads: Mapping[str, float],
    alloc: AllocationState,
    threshold: float = 0.7,
    basis: Literal["allocation", "channel"] = "allocation",
) -> bool:
    """True iff some class's load reaches threshold * width (a zero-width class triggers on any load)."""
    for class_id in loads:
        if class_id not in alloc.widths:
            raise UnknownClassError(f"class '{class_id}' has no allocated width")
    if basis == "channel":
        return math.fsum(loads.values()) >= threshold * alloc.capacity
    for class_id, load in loads.items():
        width = alloc.widths[class_id]
        if width > 0:
            if load >= threshold * width:
                return True
        elif load > 0:
            return True
    return False


def reallocate(
    alloc: AllocationState,
    forecasts: Mapping[str, Forecast],
    specs: Sequence[TrafficClassSpec],
    beta: float = 1.1,
) -> ControlDecision:
    """
    Move width toward beta * predicted load, seniors first.

    Classes trending down release width down to their target; classes trending
    up grow toward theirs, funded by the free pool (prior slack plus releases)
    and then by draining strictly junior classes, most junior first, never below
    a donor's critical minimum. The pool is spent before any donor is touched.
    """
    if set(alloc.widths) != {spec.class_id for spec in specs}:
        raise InconsistentClassesError(
            f"allocation classes {sorted(alloc.widths)} do not match specs "
            f"{sorted(spec.class_id for spec in specs)}"
        )
    for spec in specs:
        if spec.class_id not in forecasts:
            raise MissingForecastError(f"no forecast for class '{spec.class_id}'")
    alloc.check_minimums(specs)

    ordered = seniority_order(specs)
    widths = dict(alloc.widths)
    minimum = {spec.class_id: spec.critical_min_width for spec in ordered}
    target = {
        spec.class_id: max(spec.critical_min_width, forecasts[spec.class_id].predicted_load * beta)
        for spec in ordered
    }
    events: list[ControlEvent] = []
    slack_before = alloc.slack

    for spec in ordered:
        class_id = spec.class_id
        if forecasts[class_id].trend is Trend.DECREASE and widths[class_id] > target[class_id]:
            events.append(ControlEvent(EventKind.RELEASE, class_id, widths[class_id] - target[class_id]))
            widths[class_id] = target[class_id]

    pool = alloc.capacity - math.fsum(widths.values())
    if pool < WIDTH_TOLERANCE:
        pool = 0.0

    for position, spec in enumerate(ordered):
        class_id = spec.class_id
        if forecasts[class_id].trend is not Trend.INCREASE:
            continue
        need = target[class_id] - widths[class_id]
        if need <= WIDTH_TOLERANCE:
            continue
        grant = min(need, pool)
        pool -= grant
        need -= grant
        for donor in reversed(ordered[position + 1 :]):
            if need <= WIDTH_TOLERANCE:
                break
            donor_id = donor.class_id
            available = widths[donor_id] - minimum[donor_id]
            if available <= WIDTH_TOLERANCE:
                continue
            given = min(available, need)
            widths[donor_id] = minimum[donor_id] if given == available else widths[donor_id] - given
            events.append(ControlEvent(EventKind.DONATE, donor_id, given, beneficiary=class_id))
            if widths[donor_id] == minimum[donor_id]:
                events.append(ControlEvent(EventKind.AT_MINIMUM, donor_id))
            grant += given
            need -= given
        if grant > 0:
            widths[class_id] += grant
            events.append(ControlEvent(EventKind.GROW, class_id, grant))
        if need > WIDTH_TOLERANCE:
            events.append(ControlEvent(EventKind.INSUFFICIENT_CAPACITY, class_id, need))

    # Floating sums may overshoot capacity by an ulp; give it back from the last grantee.
    overshoot = math.fsum(widths.values()) - alloc.capacity
    if overshoot > 0:
        for event in reversed(events):
            if event.kind is EventKind.GROW:
                widths[event.class_id] = max(minimum[event.class_id], widths[event.class_id] - overshoot)
                break

    for event in events:
        logger.debug("reallocation event %s %s %.6g", event.kind, event.class_id, event.amount)
    return ControlDecision(
        activated=True,
        new_widths=widths,
        events=tuple(events),
        forecasts=dict(forecasts),
        slack_before=slack_before,
    )


class FeedbackController:
    """
    Stateful driver of the reallocation loop.

    Owns the cooldown clock and the per-class model banks; advanced by exactly
    one caller, one tick at a time.
    """

    def __init__(self, specs: Sequence[TrafficClassSpec], cfg: ControllerConfig | None = None):
        if not specs:
            raise InputError("controller needs at least one traffic class")
        self.specs = seniority_order(specs)
        self.cfg = cfg or ControllerConfig()
        self._last_activation: int | None = None
        self._warned_short_history = False
        self._banks: dict[str, ModelBank] = {}
        if self.cfg.method is ForecastMethod.MODEL_BANK:
            for spec in self.specs:
                self._banks[spec.class_id] = build_bank(self.cfg.bank, self.cfg.window)

    @property
    def banks(self) -> Mapping[str, ModelBank]:
        return dict(self._banks)

    def _inactive(self, alloc: AllocationState, tick: int) -> ControlDecision:
        return ControlDecision(activated=False, new_widths=alloc.widths, tick=tick)

    def forecast_all(self, histories: Mapping[str, LoadHistory]) -> dict[str, Forecast]:
        forecast_cfg = self.cfg.forecast
        forecasts = {}
        for spec in self.specs:
            history = histories[spec.class_id]
            if spec.class_id in self._banks:
                forecasts[spec.class_id], self._banks[spec.class_id] = predict_with_bank(
                    self._banks[spec.class_id], history, forecast_cfg
                )
            else:
                forecasts[spec.class_id] = predict(history, forecast_cfg)
        return forecasts

    def control_tick(
        self,
        tick: int,
        loads: Mapping[str, float],
        alloc: AllocationState,
        histories: Mapping[str, LoadHistory],
    ) -> ControlDecision:
        class_ids = {spec.class_id for spec in self.specs}
        if set(loads) != class_ids or set(histories) != class_ids:
            raise InconsistentClassesError("loads, histories and class specs name different classes")
        if not needs_control(loads, alloc, self.cfg.threshold, self.cfg.threshold_basis):
            return self._inactive(alloc, tick)
        if self._last_activation is not None and tick - self._last_activation < self.cfg.cooldown:
            return self._inactive(alloc, tick)
        if any(len(history) < 2 for history in histories.values()):
            if not self._warned_short_history:
                logger.warning("tick %d: control skipped until every class has 2 samples", tick)
                self._warned_short_history = True
            return self._inactive(alloc, tick)

        forecasts = self.forecast_all(histories)
        decision = reallocate(alloc, forecasts, self.specs, self.cfg.beta)
        self._last_activation = tick
        return ControlDecision(
            activated=True,
            new_widths=decision.new_widths,
            events=decision.events,
            forecasts=decision.forecasts,
            tick=tick,
            slack_before=decision.slack_before,
        )


def control_tick(
    loads: Mapping[str, float],
    alloc: AllocationState,
    histories: Mapping[str, LoadHistory],
    specs: Sequence[TrafficClassSpec],
    cfg: ControllerConfig | None = None,
    tick: int = 0,
) -> ControlDecision:
    """One stateless control step (no cooldown history); the simulation loop uses FeedbackController."""
    return FeedbackController(specs, cfg).control_tick(tick, loads, alloc, histories)
