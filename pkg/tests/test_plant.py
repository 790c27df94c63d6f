import math

import numpy as np
import pytest
from pydantic import ValidationError

from qos_mcp.core.errors import InputError, TraceExhaustedError
from qos_mcp.core.plant import (
    ClassQueue,
    ConstantSource,
    OnOffSource,
    PoissonSource,
    TraceSource,
    channel_tick,
    derive_seed,
    generate,
    replay_channel,
    run_scenario,
)


class TestGenerate:
    def test_constant(self):
        source = ConstantSource(rate=5)
        assert [generate(source, t) for t in (0, 1, 999)] == [5.0, 5.0, 5.0]

    def test_on_off_phase(self):
        source = OnOffSource(on_rate=10, off_rate=0, on_len=3, off_len=2)
        assert [generate(source, t) for t in range(5)] == [10, 10, 10, 0, 0]
        assert generate(source, 5) == 10

    def test_on_off_phase_shift(self):
        source = OnOffSource(on_rate=10, off_rate=1, on_len=3, off_len=2, phase=3)
        assert [generate(source, t) for t in range(5)] == [1, 1, 10, 10, 10]

    def test_poisson_is_reproducible(self):
        source = PoissonSource(mean=8)
        first = [generate(source, t, seed=5) for t in range(200)]
        second = [generate(source, t, seed=5) for t in range(200)]
        assert first == second
        assert first != [generate(source, t, seed=6) for t in range(200)]

    def test_poisson_ticks_are_independent_of_order(self):
        source = PoissonSource(mean=8)
        forward = [generate(source, t, seed=1) for t in range(20)]
        backward = [generate(source, t, seed=1) for t in reversed(range(20))]
        assert forward == backward[::-1]

    def test_poisson_mean(self):
        draws = [generate(PoissonSource(mean=8), t, seed=3) for t in range(4000)]
        assert np.mean(draws) == pytest.approx(8.0, abs=0.3)

    def test_poisson_source_seed_wins(self):
        source = PoissonSource(mean=8, seed=42)
        assert generate(source, 3, seed=1) == generate(source, 3, seed=2)

    def test_trace_exhausted(self):
        source = TraceSource(samples=[1.0, 2.0])
        assert generate(source, 1) == 2.0
        with pytest.raises(TraceExhaustedError):
            generate(source, 2)

    def test_trace_loop(self):
        source = TraceSource(samples=[1.0, 2.0, 3.0], loop=True)
        assert [generate(source, t) for t in range(7)] == [1, 2, 3, 1, 2, 3, 1]

    def test_negative_tick(self):
        with pytest.raises(InputError):
            generate(ConstantSource(rate=1), -1)

    def test_derived_seeds_differ_per_class(self):
        assert derive_seed(7, 0) != derive_seed(7, 1)
        assert derive_seed(7, 0) == derive_seed(7, 0)


class TestChannelTick:
    def serve(self, offered, width, backlog=0.0, buffer=100.0):
        queues = {"a": ClassQueue("a", buffer, backlog)}
        measurement = channel_tick({"a": offered}, {"a": width}, queues)
        return measurement.classes[0], queues["a"]

    def test_underload(self):
        m, queue = self.serve(10, 20)
        assert (m.carried, m.backlog_after, m.dropped) == (10, 0, 0)
        assert queue.backlog == 0

    def test_overload_fills_buffer_then_drops(self):
        m, queue = self.serve(30, 20, buffer=5)
        assert (m.carried, m.backlog_after, m.dropped) == (20, 5, 5)
        assert queue.backlog == 5

    def test_queue_drains(self):
        m, _ = self.serve(0, 20, backlog=7)
        assert (m.carried, m.backlog_after, m.dropped) == (7, 0, 0)

    def test_negative_offered(self):
        with pytest.raises(InputError):
            self.serve(-1, 20)

    def test_backlog_outside_buffer(self):
        with pytest.raises(InputError):
            ClassQueue("a", 5, 6)

    def test_utilization_uses_capacity(self):
        queues = {"a": ClassQueue("a", 10), "b": ClassQueue("b", 10)}
        m = channel_tick({"a": 30, "b": 10}, {"a": 40, "b": 40}, queues, capacity=100)
        assert m.utilization == pytest.approx(0.4)


def test_conservation_and_bounds(burst_spec, burst_run):
    result = burst_run
    buffers = {c.class_id: c.buffer for c in burst_spec.classes}
    drift = 0.0
    for measurement in result.series:
        for c in measurement.classes:
            drift += abs(c.conservation_error)
            assert 0 <= c.carried <= c.width
            assert 0 <= c.backlog_after <= buffers[c.class_id]
    assert drift <= 1e-9


def test_run_is_deterministic(burst_spec, burst_run):
    first = burst_run
    second = run_scenario(burst_spec)
    assert first.series == second.series
    assert [d.new_widths for d in first.decisions] == [d.new_widths for d in second.decisions]


def test_control_off_keeps_initial_widths(burst_spec):
    spec = burst_spec.model_copy(update={"controller": burst_spec.controller.model_copy(update={"enabled": False})})
    result = run_scenario(spec)
    initial = {c.class_id: c.initial_width for c in spec.classes}
    assert result.decisions == []
    for measurement in result.series:
        assert {c.class_id: c.width for c in measurement.classes} == initial


def test_control_off_matches_replay(burst_spec):
    spec = burst_spec.model_copy(update={"controller": burst_spec.controller.model_copy(update={"enabled": False})})
    result = run_scenario(spec)
    offered = [{c.class_id: c.offered for c in m.classes} for m in result.series]
    replayed = replay_channel(
        offered,
        {c.class_id: c.initial_width for c in spec.classes},
        {c.class_id: c.buffer for c in spec.classes},
        spec.channel.capacity,
    )
    assert replayed == result.series
    total = math.fsum(c.dropped for m in result.series for c in m.classes)
    assert total == math.fsum(c.dropped for m in replayed for c in m.classes)


def test_new_widths_apply_next_tick(burst_run):
    result = burst_run
    changed = next(
        d
        for d in result.decisions
        if d.activated
        and any(result.series[d.tick].by_class()[cid].width != w for cid, w in d.new_widths.items())
    )
    now = result.series[changed.tick].by_class()
    after = result.series[changed.tick + 1].by_class()
    assert any(now[cid].width != width for cid, width in changed.new_widths.items())
    assert {cid: after[cid].width for cid in changed.new_widths} == pytest.approx(changed.new_widths)


def test_underload_never_drops(make_spec):
    result = run_scenario(make_spec(ticks=500))
    assert all(c.dropped == 0 for m in result.series for c in m.classes)


def test_wider_class_never_drops_more(make_spec):
    rng = np.random.default_rng(5)
    for _ in range(20):
        source = {
            "kind": "on-off",
            "on_rate": float(rng.uniform(10, 80)),
            "off_rate": float(rng.uniform(0, 10)),
            "on_len": int(rng.integers(1, 20)),
            "off_len": int(rng.integers(0, 20)),
        }
        narrow, wide = sorted(rng.uniform(5, 60, size=2))
        drops = []
        for width in (narrow, wide):
            spec = make_spec(
                capacity=200,
                ticks=200,
                classes=[
                    {
                        "class_id": "a",
                        "priority": 1,
                        "initial_width": float(width),
                        "buffer_size": 10,
                        "source": source,
                    },
                    {"class_id": "b", "priority": 2, "initial_width": 50},
                ],
                controller={"enabled": False},
            )
            series = run_scenario(spec).series
            drops.append(math.fsum(m.by_class()["a"].dropped for m in series))
        assert drops[1] <= drops[0]


@pytest.mark.parametrize(
    "classes",
    [
        [
            {"class_id": "a", "priority": 1, "initial_width": 10},
            {"class_id": "a", "priority": 2, "initial_width": 10},
        ],
        [
            {"class_id": "a", "priority": 1, "initial_width": 10},
            {"class_id": "b", "priority": 1, "initial_width": 10},
        ],
        [
            {"class_id": "a", "priority": 1, "initial_width": 60},
            {"class_id": "b", "priority": 2, "initial_width": 60},
        ],
    ],
    ids=["duplicate-id", "duplicate-priority", "over-capacity"],
)
def test_invalid_scenarios(make_spec, classes):
    with pytest.raises(ValidationError):
        make_spec(classes=classes)
