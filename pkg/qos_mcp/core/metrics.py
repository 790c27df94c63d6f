"""
Load histograms, drop statistics and controlled-vs-uncontrolled comparisons.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from qos_mcp.core.controller import ControlDecision
from qos_mcp.core.errors import InconsistentClassesError, InputError
from qos_mcp.core.plant import LoadSeries

logger = logging.getLogger(__name__)

DEFAULT_BINS = 20
DEFAULT_TAIL_THRESHOLD = 0.9


@dataclass(frozen=True, eq=False)
class LoadHistogram:
    """Equal-width bins over [0, 1]; the last bin is right-inclusive."""

    bin_edges: np.ndarray
    frequencies: np.ndarray
    count: int
    samples: np.ndarray = field(repr=False)

    @property
    def nbins(self) -> int:
        return len(self.frequencies)

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(lo), float(hi), float(freq))
            for lo, hi, freq in zip(self.bin_edges[:-1], self.bin_edges[1:], self.frequencies)
        ]


@dataclass(frozen=True)
class ClassTotals:
    class_id: str
    offered: float
    carried: float
    dropped: float
    final_backlog: float

    @property
    def drop_ratio(self) -> float:
        return self.dropped / self.offered if self.offered > 0 else 0.0


@dataclass(frozen=True)
class RunReport:
    ticks: int
    capacity: float
    classes: tuple[ClassTotals, ...]
    histogram: LoadHistogram
    tail_threshold: float
    tail_mass: float
    peak_utilization: float
    mean_utilization: float
    activations: int
    class_histograms: dict[str, LoadHistogram] = field(default_factory=dict)

    @property
    def offered(self) -> float:
        return math.fsum(c.offered for c in self.classes)

    @property
    def carried(self) -> float:
        return math.fsum(c.carried for c in self.classes)

    @property
    def dropped(self) -> float:
        return math.fsum(c.dropped for c in self.classes)

    @property
    def drop_ratio(self) -> float:
        return self.dropped / self.offered if self.offered > 0 else 0.0

    def class_ids(self) -> list[str]:
        return [c.class_id for c in self.classes]


@dataclass(frozen=True)
class MetricDelta:
    name: str
    base: float
    controlled: float
    lower_is_better: bool = True

    @property
    def delta(self) -> float:
        return self.controlled - self.base

    @property
    def ratio(self) -> float:
        if self.base == 0:
            return 1.0 if self.controlled == 0 else math.inf
        return self.controlled / self.base

    @property
    def improved(self) -> bool:
        if self.lower_is_better:
            return self.controlled < self.base
        return self.controlled > self.base


@dataclass(frozen=True)
class ComparisonReport:
    metrics: tuple[MetricDelta, ...]

    def __getitem__(self, name: str) -> MetricDelta:
        for metric in self.metrics:
            if metric.name == name:
                return metric
        raise KeyError(name)

    @property
    def improved(self) -> bool:
        """Controlled run has strictly fewer total drops and strictly lower tail mass."""
        return self["dropped"].improved and self["tail_mass"].improved


def _clamped(utilizations: Sequence[float]) -> np.ndarray:
    values = np.asarray(utilizations, dtype=float)
    if values.size == 0:
        raise InputError("no utilization samples")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InputError("utilization samples must be finite and >= 0")
    above = int(np.sum(values > 1.0))
    if above:
        logger.warning("%d utilization samples above 1 clamped into the last bin", above)
        values = np.minimum(values, 1.0)
    return values


def histogram(utilizations: Sequence[float], nbins: int = DEFAULT_BINS) -> LoadHistogram:
    if nbins < 1:
        raise InputError(f"nbins must be >= 1, got {nbins}")
    values = _clamped(utilizations)
    counts, edges = np.histogram(values, bins=nbins, range=(0.0, 1.0))
    return LoadHistogram(edges, counts / values.size, int(values.size), values)


def tail_mass(data: LoadHistogram | Sequence[float], threshold: float = DEFAULT_TAIL_THRESHOLD) -> float:
    """
    Fraction of utilization samples strictly above threshold.

    A histogram answers from the clamped samples it was built from, so
    samples sitting exactly on the threshold are never counted.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InputError(f"tail threshold must lie in [0, 1], got {threshold}")
    if isinstance(data, LoadHistogram):
        if data.samples.size == 0:
            raise InputError("empty histogram")
        values = data.samples
    else:
        values = _clamped(data)
    return float(np.count_nonzero(values > threshold) / values.size)


def build_report(
    series: LoadSeries,
    decisions: Sequence[ControlDecision] = (),
    nbins: int = DEFAULT_BINS,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
    per_class: bool = False,
) -> RunReport:
    if not series:
        raise InputError("cannot report on an empty load series")
    utilization = [m.utilization for m in series]
    class_ids = [c.class_id for c in series[0].classes]
    totals = []
    for index, class_id in enumerate(class_ids):
        rows = [m.classes[index] for m in series]
        totals.append(
            ClassTotals(
                class_id=class_id,
                offered=math.fsum(r.offered for r in rows),
                carried=math.fsum(r.carried for r in rows),
                dropped=math.fsum(r.dropped for r in rows),
                final_backlog=rows[-1].backlog_after,
            )
        )
    class_histograms = {}
    if per_class:
        for index, class_id in enumerate(class_ids):
            shares = [
                m.classes[index].carried / m.classes[index].width if m.classes[index].width > 0 else 0.0
                for m in series
            ]
            class_histograms[class_id] = histogram(shares, nbins)
    return RunReport(
        ticks=len(series),
        capacity=series[0].capacity,
        classes=tuple(totals),
        histogram=histogram(utilization, nbins),
        tail_threshold=tail_threshold,
        tail_mass=tail_mass(utilization, tail_threshold),
        peak_utilization=min(1.0, max(utilization)),
        mean_utilization=math.fsum(utilization) / len(utilization),
        activations=sum(1 for d in decisions if d.activated),
        class_histograms=class_histograms,
    )


def compare(base: RunReport, controlled: RunReport) -> ComparisonReport:
    if base.class_ids() != controlled.class_ids():
        raise InconsistentClassesError(
            f"reports cover different classes: {base.class_ids()} vs {controlled.class_ids()}"
        )
    metrics = [
        MetricDelta("dropped", base.dropped, controlled.dropped),
        MetricDelta("drop_ratio", base.drop_ratio, controlled.drop_ratio),
        MetricDelta("tail_mass", base.tail_mass, controlled.tail_mass),
        MetricDelta("peak_utilization", base.peak_utilization, controlled.peak_utilization),
        MetricDelta("mean_utilization", base.mean_utilization, controlled.mean_utilization, False),
        MetricDelta("carried", base.carried, controlled.carried, False),
    ]
    for ours, theirs in zip(base.classes, controlled.classes):
        metrics.append(MetricDelta(f"{ours.class_id}.dropped", ours.dropped, theirs.dropped))
    return ComparisonReport(tuple(metrics))
