"""
Per-class load forecasting over a sliding window.

The default forecaster is an ordinary least-squares trend. The model-bank
variant keeps several prefitted candidates and switches to the one with the
smallest recent one-step-ahead error.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Annotated, Literal, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from qos_mcp.core import statespace
from qos_mcp.core.errors import AnalysisError, ForecastError, InputError

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 20
DEFAULT_HORIZON = 5
DEFAULT_DEAD_BAND = 0.02


class Trend(StrEnum):
    INCREASE = "increase"
    DECREASE = "decrease"
    FLAT = "flat"


class ForecastMethod(StrEnum):
    LINEAR_TREND = "linear-trend"
    MODEL_BANK = "model-bank"


class ForecastConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window: int = Field(DEFAULT_WINDOW, ge=2)
    horizon: int = Field(DEFAULT_HORIZON, ge=1)
    method: ForecastMethod = ForecastMethod.LINEAR_TREND
    dead_band: float = Field(DEFAULT_DEAD_BAND, ge=0.0, lt=1.0)


@dataclass(frozen=True)
class LoadHistory:
    """Load samples of one class; ticks strictly increasing, loads finite and >= 0."""

    class_id: str
    ticks: tuple[int, ...]
    loads: tuple[float, ...]

    def __post_init__(self):
        if len(self.ticks) != len(self.loads):
            raise InputError(
                f"history for '{self.class_id}' has {len(self.ticks)} ticks and {len(self.loads)} loads"
            )
        for previous, current in zip(self.ticks, self.ticks[1:]):
            if current <= previous:
                raise InputError(f"history for '{self.class_id}' has non-increasing ticks")
        for load in self.loads:
            if not (np.isfinite(load) and load >= 0):
                raise InputError(f"history for '{self.class_id}' has invalid load {load}")

    @classmethod
    def from_pairs(cls, class_id: str, samples: Iterable[tuple[int, float]]) -> "LoadHistory":
        pairs = list(samples)
        return cls(class_id, tuple(int(t) for t, _ in pairs), tuple(float(v) for _, v in pairs))

    def __len__(self) -> int:
        return len(self.ticks)

    @property
    def last_tick(self) -> int:
        return self.ticks[-1]

    @property
    def last_load(self) -> float:
        return self.loads[-1]

    def head(self, count: int) -> "LoadHistory":
        return LoadHistory(self.class_id, self.ticks[:count], self.loads[:count])

    def tail(self, count: int) -> "LoadHistory":
        return LoadHistory(self.class_id, self.ticks[-count:], self.loads[-count:])


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    t_mean: float
    load_mean: float

    def at(self, tick: float) -> float:
        # Centred form keeps extrapolation exact on affine data far from tick 0.
        return self.load_mean + self.slope * (tick - self.t_mean)


@dataclass(frozen=True)
class Forecast:
    class_id: str
    predicted_load: float
    trend: Trend
    tick: int
    last_load: float


def fit_trend(history: LoadHistory, window: int = DEFAULT_WINDOW) -> TrendFit:
    """OLS line through the last min(window, len(history)) (tick, load) pairs."""
    if len(history) < 2:
        raise ForecastError(
            f"trend fit for '{history.class_id}' needs at least 2 samples, got {len(history)}"
        )
    recent = history.tail(max(2, window))
    ticks = np.asarray(recent.ticks, dtype=float)
    loads = np.asarray(recent.loads, dtype=float)
    t_mean = ticks.mean()
    load_mean = loads.mean()
    centred = ticks - t_mean
    slope = float(np.dot(centred, loads - load_mean) / np.dot(centred, centred))
    return TrendFit(slope, float(load_mean - slope * t_mean), float(t_mean), float(load_mean))


def classify_trend(predicted: float, last: float, dead_band: float = DEFAULT_DEAD_BAND) -> Trend:
    if predicted > last * (1.0 + dead_band):
        return Trend.INCREASE
    if predicted < last * (1.0 - dead_band):
        return Trend.DECREASE
    return Trend.FLAT


def _make_forecast(history: LoadHistory, raw: float, cfg: ForecastConfig) -> Forecast:
    predicted = max(0.0, float(raw))
    return Forecast(
        class_id=history.class_id,
        predicted_load=predicted,
        trend=classify_trend(predicted, history.last_load, cfg.dead_band),
        tick=history.last_tick + cfg.horizon,
        last_load=history.last_load,
    )


def predict(history: LoadHistory, cfg: ForecastConfig | None = None) -> Forecast:
    cfg = cfg or ForecastConfig()
    fit = fit_trend(history, cfg.window)
    return _make_forecast(history, fit.at(history.last_tick + cfg.horizon), cfg)


class Forecaster(Protocol):
    name: str

    def one_step(self, history: LoadHistory) -> float: ...

    def forecast(self, history: LoadHistory, horizon: int) -> float: ...


@dataclass(frozen=True)
class TrendForecaster:
    window: int = DEFAULT_WINDOW
    name: str = "trend"

    def one_step(self, history: LoadHistory) -> float:
        return self.forecast(history, 1)

    def forecast(self, history: LoadHistory, horizon: int) -> float:
        if len(history) < 2:
            return history.last_load
        return fit_trend(history, self.window).at(history.last_tick + horizon)


@dataclass(frozen=True)
class DriftForecaster:
    """Last observed load plus a fixed drift per tick."""

    drift: float = 0.0
    name: str = "drift"

    def one_step(self, history: LoadHistory) -> float:
        return self.forecast(history, 1)

    def forecast(self, history: LoadHistory, horizon: int) -> float:
        return history.last_load + self.drift * horizon


@dataclass(frozen=True)
class StateSpaceForecaster:
    """One-dimensional x(t+1) = a x(t) + b, i.e. the state-space plant with a unit input."""

    a: float
    b: float
    name: str = "state-space"

    @classmethod
    def fit(cls, history: LoadHistory) -> "StateSpaceForecaster":
        states = np.asarray(history.loads, dtype=float).reshape(-1, 1)
        ones = np.ones((len(history) - 1, 1))
        result = statespace.identify(statespace.Trajectory(states, ones))
        return cls(float(result.A[0, 0]), float(result.B[0, 0]))

    def one_step(self, history: LoadHistory) -> float:
        return self.forecast(history, 1)

    def forecast(self, history: LoadHistory, horizon: int) -> float:
        value = history.last_load
        for _ in range(horizon):
            value = self.a * value + self.b
        return value


@dataclass(frozen=True)
class IdentifiedStateSpaceForecaster:
    """
    Refits x(t+1) = a x(t) + b to the last `window` loads on every call.

    Holds the last load while the window is too short or too flat to identify.
    """

    window: int = DEFAULT_WINDOW
    name: str = "state-space"

    def one_step(self, history: LoadHistory) -> float:
        return self.forecast(history, 1)

    def forecast(self, history: LoadHistory, horizon: int) -> float:
        try:
            fitted = StateSpaceForecaster.fit(history.tail(self.window))
        except AnalysisError:
            return history.last_load
        return fitted.forecast(history, horizon)


class TrendCandidate(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["trend"] = "trend"
    window: int | None = Field(None, ge=2)


class DriftCandidate(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["drift"] = "drift"
    drift: float = 0.0


class StateSpaceCandidate(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["state-space"] = "state-space"
    a: float | None = None
    b: float | None = None
    window: int | None = Field(None, ge=3)

    @model_validator(mode="after")
    def _fixed_or_identified(self):
        if self.a is None and self.b is not None:
            raise ValueError("b needs a; leave both out to identify the model from the loads")
        if self.a is not None and self.window is not None:
            raise ValueError("window applies only to an identified model (no a and b)")
        return self


CandidateSpec = Annotated[
    TrendCandidate | DriftCandidate | StateSpaceCandidate, Field(discriminator="kind")
]


@dataclass(frozen=True)
class ModelBank:
    candidates: tuple[Forecaster, ...]
    active_index: int = 0

    def __post_init__(self):
        if not self.candidates:
            raise ForecastError("model bank is empty")
        if not 0 <= self.active_index < len(self.candidates):
            raise ForecastError(
                f"active index {self.active_index} outside bank of {len(self.candidates)}"
            )

    @property
    def active(self) -> Forecaster:
        return self.candidates[self.active_index]

    def with_active(self, index: int) -> "ModelBank":
        return ModelBank(self.candidates, index)


def build_bank(specs: Sequence[CandidateSpec], window: int = DEFAULT_WINDOW) -> ModelBank:
    """Instantiate bank candidates; an empty list gives {trend, persistence}."""
    if not specs:
        return ModelBank((TrendForecaster(window), DriftForecaster(0.0)))
    candidates: list[Forecaster] = []
    for spec in specs:
        if isinstance(spec, TrendCandidate):
            candidates.append(TrendForecaster(spec.window or window))
        elif isinstance(spec, DriftCandidate):
            candidates.append(DriftForecaster(spec.drift))
        elif spec.a is None:
            candidates.append(IdentifiedStateSpaceForecaster(spec.window or window))
        else:
            candidates.append(StateSpaceForecaster(spec.a, spec.b or 0.0))
    return ModelBank(tuple(candidates))


def one_step_errors(
    forecaster: Forecaster, history: LoadHistory, window: int = DEFAULT_WINDOW
) -> list[float]:
    """Absolute one-step-ahead errors over the last `window` samples that have a predecessor."""
    first = max(1, len(history) - window)
    return [
        abs(forecaster.one_step(history.head(k)) - history.loads[k])
        for k in range(first, len(history))
    ]


def bank_select(bank: ModelBank, history: LoadHistory, window: int = DEFAULT_WINDOW) -> int:
    """Index of the candidate with the smallest mean absolute one-step error; ties go to the lowest index."""
    if not bank.candidates:
        raise ForecastError("model bank is empty")
    if len(history) < 2:
        raise ForecastError(
            f"bank selection for '{history.class_id}' needs at least 2 samples, got {len(history)}"
        )
    if len(bank.candidates) == 1:
        return 0
    best_index, best_error = 0, None
    for index, candidate in enumerate(bank.candidates):
        errors = one_step_errors(candidate, history, window)
        error = float(np.mean(errors))
        if best_error is None or error < best_error:
            best_index, best_error = index, error
    return best_index


def predict_with_bank(
    bank: ModelBank, history: LoadHistory, cfg: ForecastConfig | None = None
) -> tuple[Forecast, ModelBank]:
    """Select the active candidate for this history and forecast with it."""
    cfg = cfg or ForecastConfig(method=ForecastMethod.MODEL_BANK)
    index = bank_select(bank, history, cfg.window)
    if index != bank.active_index:
        logger.debug(
            "class %s switches forecaster %s -> %s",
            history.class_id,
            bank.active.name,
            bank.candidates[index].name,
        )
    selected = bank.with_active(index)
    raw = selected.active.forecast(history, cfg.horizon)
    return _make_forecast(history, raw, cfg), selected
