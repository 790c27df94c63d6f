import numpy as np
import pytest

from qos_mcp.core import statespace
from qos_mcp.core.errors import ScenarioFileError
from qos_mcp.core.metrics import build_report, compare
from qos_mcp.core.plant import run_scenario
from qos_mcp.utils.output_utils import (
    SERIES_COLUMNS,
    fmt,
    format_analysis,
    format_comparison,
    format_report,
    read_trace,
    read_trajectory,
    series_csv,
    trace_csv,
    trajectory_csv,
)


class TestReadTrace:
    def test_with_and_without_header(self):
        rows = "0,a,1.5\n0,b,2\n1,a,3\n1,b,4\n"
        expected = {"a": [1.5, 3.0], "b": [2.0, 4.0]}
        assert read_trace(rows) == expected
        assert read_trace("tick,class_id,offered_load\n" + rows) == expected

    def test_blank_lines_are_skipped(self):
        assert read_trace("0,a,1\n\n1,a,2\n") == {"a": [1.0, 2.0]}

    @pytest.mark.parametrize(
        "text,line,message",
        [
            ("0,a,1\n1,a\n", 2, "expected 3 columns"),
            ("0,a,1\nx,a,2\n", 2, "not an integer"),
            ("0,a,1\n1,a,-2\n", 2, ">= 0"),
            ("0,a,1\n1,a,nan\n", 2, "finite"),
            ("0,a,1\n2,a,2\n", 2, "out of sequence"),
            ("1,a,1\n", 1, "out of sequence"),
            ("tick,class_id,offered_load\n0,,1\n", 2, "empty class_id"),
        ],
    )
    def test_malformed_rows_cite_line(self, text, line, message):
        with pytest.raises(ScenarioFileError, match=message) as excinfo:
            read_trace(text, "loads.csv")
        assert excinfo.value.line == line
        assert str(excinfo.value).startswith(f"loads.csv:{line}:")

    def test_empty(self):
        with pytest.raises(ScenarioFileError, match="no samples"):
            read_trace("tick,class_id,offered_load\n")

    def test_run_exports_replayable_trace(self, make_spec):
        spec = make_spec(
            ticks=12,
            classes=[
                {"class_id": "a", "priority": 1, "initial_width": 50, "source": {"kind": "poisson", "mean": 7}},
                {"class_id": "b", "priority": 2, "initial_width": 50},
            ],
        )
        series = run_scenario(spec).series
        loads = read_trace(trace_csv(series))
        assert loads["a"] == [m.by_class()["a"].offered for m in series]
        assert loads["b"] == [10.0] * 12


class TestTrajectory:
    def test_file_layout(self, two_state_model):
        inputs = statespace.random_inputs(two_state_model, 3, seed=1)
        trajectory, _ = statespace.simulate(two_state_model, [1.0, 0.0], inputs)
        lines = trajectory_csv(trajectory).splitlines()
        assert lines[0] == "t,x1,x2,u1"
        assert len(lines) == 5
        assert lines[-1].startswith("3,") and lines[-1].endswith(",")

    def test_exact_round_trip(self, two_state_model):
        inputs = statespace.random_inputs(two_state_model, 20, seed=4)
        trajectory, _ = statespace.simulate(two_state_model, [0.3, -0.2], inputs)
        parsed = read_trajectory(trajectory_csv(trajectory))
        np.testing.assert_array_equal(parsed.states, trajectory.states)
        np.testing.assert_array_equal(parsed.inputs, trajectory.inputs)

    def test_autonomous_trajectory(self):
        parsed = read_trajectory("t,x1\n0,1\n1,0.5\n2,0.25\n")
        assert parsed.n == 1 and parsed.m == 0
        assert len(parsed) == 3

    @pytest.mark.parametrize(
        "text,line,message",
        [
            ("x1,u1\n0,1,1\n", 1, "header"),
            ("t,x1,x3,u1\n0,1,1,1\n", 1, "header must be"),
            ("t,x1,u1\n0,1,1\n1,2\n", 3, "expected 3 columns"),
            ("t,x1,u1\n0,1,1\n2,2,\n", 3, "expected t = 1"),
            ("t,x1,u1\n0,1,1\n1,2,5\n", 3, "final row"),
            ("t,x1,u1\n0,1,oops\n1,2,\n", 2, "not a number"),
        ],
    )
    def test_malformed(self, text, line, message):
        with pytest.raises(ScenarioFileError, match=message) as excinfo:
            read_trajectory(text, "traj.csv")
        assert excinfo.value.line == line

    def test_no_samples(self):
        with pytest.raises(ScenarioFileError):
            read_trajectory("t,x1,u1\n")


class TestFormats:
    def test_fmt(self):
        assert fmt(0.1 + 0.2) == "0.3"
        assert fmt(12000.0) == "12000"

    def test_series_rows(self, make_spec):
        series = run_scenario(make_spec(ticks=3)).series
        lines = series_csv(series).splitlines()
        assert lines[0] == ",".join(SERIES_COLUMNS)
        assert len(lines) == 1 + 3 * 2
        assert lines[1] == "0,a,10,0,10,0,0,50,0.2"

    def test_report(self, make_spec):
        report = build_report(run_scenario(make_spec(ticks=4)).series)
        text = format_report(report, "demo")
        assert text.startswith("== demo ==\n")
        assert ["dropped:", "0"] in [line.split() for line in text.splitlines()]
        assert "tail_mass(>0.9): 0\n" in text
        assert text.endswith("b,40,40,0,0,0\n")

    def test_comparison(self, make_spec):
        report = build_report(run_scenario(make_spec(ticks=4)).series)
        text = format_comparison(compare(report, report))
        assert "metric,without,with,delta,ratio,improved" in text
        assert "dropped,0,0,0,1,no" in text
        assert text.endswith("improved: no\n")

    def test_analysis(self):
        model = statespace.StateSpaceModel(A=[[-0.5, 0.0], [0.0, 0.25]], B=[[1.0], [1.0]])
        text = format_analysis(statespace.analyze(model, reach_steps=1))
        assert "spectral_radius: 0.5\n" in text
        assert "stability: stable\n" in text
        assert "controllability: controllable\n" in text
        assert "reachability_rank(1 steps): 1/2\n" in text
        assert text.endswith("-0.5,0.5,decaying,yes\n0.25,0.25,decaying,no\n")
