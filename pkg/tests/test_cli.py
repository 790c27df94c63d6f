import os

import numpy as np
import pytest
from click.testing import CliRunner

from qos_mcp.cli import IDENTIFIED_MODEL_FILE, cli
from qos_mcp.utils.output_utils import (
    CLASS_HISTOGRAM_FILE,
    COMPARISON_FILE,
    HISTOGRAM_FILE,
    REPORT_FILE,
    SERIES_FILE,
    read_trace,
    read_trajectory,
)
from qos_mcp.utils.yaml_utils import RESIDUAL_COMMENT, parse_model

POISSON_SCENARIO = """\
channel:
  capacity: 60
  ticks: 300
  seed: 11
classes:
  - class_id: web
    priority: 1
    initial_width: 30
    critical_min_width: 5
    source:
      kind: poisson
      mean: 22
  - class_id: backup
    priority: 2
    initial_width: 30
    critical_min_width: 5
    source:
      kind: poisson
      mean: 18
"""

COUPLED_MODEL = """\
n: 2
m: 2
A:
  - [0.5, 0.2]
  - [-0.1, 0.7]
B:
  - [1.0, 0.0]
  - [0.5, 1.0]
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_bytes(*parts):
    with open(os.path.join(*parts), "rb") as f:
        return f.read()


class TestRun:
    def test_writes_result_files(self, runner, tmp_path, quiet_path):
        out = str(tmp_path / "out")
        result = runner.invoke(cli, ["run", quiet_path, "--out", out])
        assert result.exit_code == 0, result.output
        assert result.stdout.startswith("== quiet_two_class.yml (control on) ==\n")
        for name in (SERIES_FILE, REPORT_FILE, HISTOGRAM_FILE):
            assert os.path.isfile(os.path.join(out, name))
        assert not os.path.exists(os.path.join(out, CLASS_HISTOGRAM_FILE))
        assert read_bytes(out, REPORT_FILE).decode() == result.stdout

    def test_series_has_a_row_per_class_and_tick(self, runner, tmp_path):
        scenario = write(tmp_path, "poisson.yml", POISSON_SCENARIO)
        out = str(tmp_path / "out")
        assert runner.invoke(cli, ["run", scenario, "--out", out]).exit_code == 0
        assert len(read_bytes(out, SERIES_FILE).decode().splitlines()) == 1 + 300 * 2

    def test_bins_and_per_class(self, runner, tmp_path, quiet_path):
        out = str(tmp_path / "out")
        result = runner.invoke(cli, ["run", quiet_path, "--out", out, "--bins", "5", "--per-class"])
        assert result.exit_code == 0, result.output
        assert len(read_bytes(out, HISTOGRAM_FILE).decode().splitlines()) == 1 + 5
        assert len(read_bytes(out, CLASS_HISTOGRAM_FILE).decode().splitlines()) == 1 + 2 * 5

    def test_trace_out_replays(self, runner, tmp_path):
        scenario = write(tmp_path, "poisson.yml", POISSON_SCENARIO)
        trace = str(tmp_path / "loads.csv")
        out = str(tmp_path / "out")
        assert runner.invoke(cli, ["run", scenario, "--out", out, "--trace-out", trace]).exit_code == 0
        loads = read_trace(read_bytes(trace).decode())
        assert set(loads) == {"web", "backup"}
        assert len(loads["web"]) == 300

        replay = write(
            tmp_path,
            "replay.yml",
            POISSON_SCENARIO.replace("kind: poisson\n      mean: 22", "kind: trace\n      file: loads.csv").replace(
                "kind: poisson\n      mean: 18", "kind: trace\n      file: loads.csv"
            ),
        )
        replay_out = str(tmp_path / "replay")
        assert runner.invoke(cli, ["run", replay, "--out", replay_out]).exit_code == 0
        assert read_bytes(replay_out, SERIES_FILE) == read_bytes(out, SERIES_FILE)

    def test_invalid_scenario_cites_line(self, runner, tmp_path):
        scenario = write(tmp_path, "bad.yml", POISSON_SCENARIO.replace("capacity: 60", "capacity: -60"))
        result = runner.invoke(cli, ["run", scenario, "--out", str(tmp_path / "out")])
        assert result.exit_code == 1
        assert f"Error: {scenario}:2: channel.capacity:" in result.output
        assert not os.path.exists(tmp_path / "out")

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", str(tmp_path / "nope.yml")])
        assert result.exit_code == 1
        assert "cannot read file" in result.output

    def test_bad_override(self, runner, tmp_path, quiet_path):
        result = runner.invoke(cli, ["run", quiet_path, "--out", str(tmp_path), "--set", "classes.7.priority=1"])
        assert result.exit_code == 1
        assert "out of range" in result.output

    def test_override_equals_edited_file(self, runner, tmp_path, burst_path):
        with open(burst_path) as f:
            edited = f.read().replace("enabled: true", "enabled: false")
        os.makedirs(tmp_path / "edited")
        edited_path = write(tmp_path / "edited", os.path.basename(burst_path), edited)

        overridden = runner.invoke(
            cli, ["run", burst_path, "--out", str(tmp_path / "a"), "--set", "controller.enabled=false"]
        )
        from_file = runner.invoke(cli, ["run", edited_path, "--out", str(tmp_path / "b")])
        assert overridden.exit_code == from_file.exit_code == 0
        for name in (SERIES_FILE, REPORT_FILE, HISTOGRAM_FILE):
            assert read_bytes(tmp_path, "a", name) == read_bytes(tmp_path, "b", name)

    def test_seed_changes_poisson_loads(self, runner, tmp_path):
        scenario = write(tmp_path, "poisson.yml", POISSON_SCENARIO)
        runner.invoke(cli, ["run", scenario, "--out", str(tmp_path / "a")])
        runner.invoke(cli, ["run", scenario, "--out", str(tmp_path / "b"), "--seed", "12"])
        assert read_bytes(tmp_path, "a", SERIES_FILE) != read_bytes(tmp_path, "b", SERIES_FILE)

    def test_byte_identical_reruns(self, runner, tmp_path):
        scenario = write(tmp_path, "poisson.yml", POISSON_SCENARIO)
        for out in ("first", "second"):
            result = runner.invoke(cli, ["run", scenario, "--out", str(tmp_path / out), "--per-class"])
            assert result.exit_code == 0, result.output
        for name in (SERIES_FILE, REPORT_FILE, HISTOGRAM_FILE, CLASS_HISTOGRAM_FILE):
            assert read_bytes(tmp_path, "first", name) == read_bytes(tmp_path, "second", name)


class TestCompare:
    def test_quiet_arms_are_identical(self, runner, tmp_path, quiet_path):
        out = str(tmp_path / "cmp")
        result = runner.invoke(cli, ["compare", quiet_path, "--out", out])
        assert result.exit_code == 0, result.output
        assert read_bytes(out, "uncontrolled", SERIES_FILE) == read_bytes(out, "controlled", SERIES_FILE)
        assert read_bytes(out, "uncontrolled", HISTOGRAM_FILE) == read_bytes(out, "controlled", HISTOGRAM_FILE)
        assert result.stdout.endswith("improved: no\n")
        assert read_bytes(out, COMPARISON_FILE).decode() == result.stdout

    def test_arms_set_control_themselves(self, runner, tmp_path):
        scenario = write(tmp_path, "poisson.yml", POISSON_SCENARIO)
        result = runner.invoke(
            cli, ["compare", scenario, "--out", str(tmp_path), "--set", "controller.enabled=false"]
        )
        assert result.exit_code == 0, result.output

        def activations(arm):
            report = read_bytes(tmp_path, arm, REPORT_FILE).decode()
            return next(int(line.split()[1]) for line in report.splitlines() if line.startswith("activations:"))

        assert activations("uncontrolled") == 0
        assert activations("controlled") > 0

    def test_invalid_scenario(self, runner, tmp_path):
        scenario = write(tmp_path, "bad.yml", POISSON_SCENARIO.replace("priority: 2", "priority: 1"))
        result = runner.invoke(cli, ["compare", scenario, "--out", str(tmp_path / "cmp")])
        assert result.exit_code == 1
        assert "priorities must be distinct" in result.output


class TestAnalyze:
    def analyze(self, runner, tmp_path, text, *extra):
        model = write(tmp_path, "model.yml", text)
        return runner.invoke(cli, ["analyze", model, *extra])

    def test_stable_diagonal(self, runner, tmp_path):
        result = self.analyze(runner, tmp_path, "n: 2\nm: 1\nA: [[0.5, 0], [0, 0.9]]\nB: [[1], [1]]\n")
        assert result.exit_code == 0, result.output
        assert "spectral_radius: 0.9\n" in result.stdout
        assert "stability: stable\n" in result.stdout
        assert "controllability: controllable\n" in result.stdout
        assert "observability: observable\n" in result.stdout

    def test_zero_input_matrix(self, runner, tmp_path):
        result = self.analyze(runner, tmp_path, "n: 2\nm: 1\nA: [[0.5, 0], [0, 0.9]]\nB: [[0], [0]]\n")
        assert result.exit_code == 0
        assert "controllability_rank: 0/2\n" in result.stdout
        assert "controllability: not controllable\n" in result.stdout

    def test_unstable(self, runner, tmp_path):
        result = self.analyze(runner, tmp_path, "n: 1\nm: 1\nA: [[1.2]]\nB: [[1]]\n")
        assert result.exit_code == 0
        assert "stability: not stable\n" in result.stdout
        assert "1.2,1.2,growing,no" in result.stdout

    def test_reach_steps(self, runner, tmp_path):
        result = self.analyze(runner, tmp_path, COUPLED_MODEL, "--reach-steps", "1")
        assert "reachability_rank(1 steps): 2/2\n" in result.stdout

    def test_bad_dimensions(self, runner, tmp_path):
        result = self.analyze(runner, tmp_path, "n: 2\nm: 1\nA: [[0.5, 0]]\nB: [[1], [1]]\n")
        assert result.exit_code == 1
        assert "A must be 2x2" in result.output


class TestSimulateIdentify:
    def test_round_trip(self, runner, tmp_path):
        model = write(tmp_path, "model.yml", COUPLED_MODEL)
        trajectory = str(tmp_path / "traj.csv")
        result = runner.invoke(
            cli, ["simulate", model, "--ticks", "100", "--seed", "3", "--x0", "1,-1", "--out", trajectory]
        )
        assert result.exit_code == 0, result.output
        assert result.stdout == f"wrote 101 states to {trajectory}\n"
        assert len(read_trajectory(read_bytes(trajectory).decode())) == 101

        result = runner.invoke(cli, ["identify", trajectory, "--out", str(tmp_path / "fit")])
        assert result.exit_code == 0, result.output
        assert result.stdout.startswith(RESIDUAL_COMMENT)
        identified = parse_model(result.stdout)
        original = parse_model(COUPLED_MODEL)
        assert np.linalg.norm(identified.A - original.A) <= 1e-8
        assert np.linalg.norm(identified.B - original.B) <= 1e-8
        assert read_bytes(tmp_path, "fit", IDENTIFIED_MODEL_FILE).decode() == result.stdout

    def test_simulate_is_deterministic(self, runner, tmp_path):
        model = write(tmp_path, "model.yml", COUPLED_MODEL)
        for name in ("a.csv", "b.csv"):
            runner.invoke(cli, ["simulate", model, "--seed", "9", "--out", str(tmp_path / name)])
        assert read_bytes(tmp_path, "a.csv") == read_bytes(tmp_path, "b.csv")

    def test_bad_initial_state(self, runner, tmp_path):
        model = write(tmp_path, "model.yml", COUPLED_MODEL)
        result = runner.invoke(cli, ["simulate", model, "--x0", "1", "--out", str(tmp_path / "t.csv")])
        assert result.exit_code == 1
        assert "--x0 must have 2 values" in result.output

    def test_too_few_samples(self, runner, tmp_path):
        trajectory = write(tmp_path, "short.csv", "t,x1,x2,u1\n0,1,0,1\n1,0.5,0.2,\n")
        result = runner.invoke(cli, ["identify", trajectory])
        assert result.exit_code == 3
        assert "needs at least 4 states" in result.output

    def test_zero_trajectory(self, runner, tmp_path):
        rows = "".join(f"{t},0,0,0\n" for t in range(9)) + "9,0,0,\n"
        trajectory = write(tmp_path, "zeros.csv", "t,x1,x2,u1\n" + rows)
        result = runner.invoke(cli, ["identify", trajectory])
        assert result.exit_code == 3
        assert "rank 0" in result.output

    def test_malformed_trajectory(self, runner, tmp_path):
        trajectory = write(tmp_path, "bad.csv", "t,x1,u1\n0,1,1\n1,x,\n")
        result = runner.invoke(cli, ["identify", trajectory])
        assert result.exit_code == 1
        assert f"{trajectory}:3:" in result.output


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert result.output.startswith("qos-feedback, version ")
