"""
Unit tests for configuration loading, experiment runs, self-checks, reports
and the command line.
"""
import dataclasses
import json
from pathlib import Path

import pandas as pd
import pytest

import cli
from api.allocator.services import allocate
from api.common.errors import ConfigError, InvalidChunkSize, MissingRuns
from api.experiments.recipes import build_recipe
from api.experiments.schemas import VerifyReport, WorkloadKind
from api.experiments.services import (
    apply_override, cmd_report, cmd_run, cmd_verify, load_config, trace_path,
)
from api.experiments.verification import SEQUENCE_LENGTH, verify_allocator, verify_invariants
from api.metrics.services import replay_metrics
from api.workloads.schemas import FioPattern
from api.zones.trace import read_trace

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
G_SMALL = CONFIGS / "g-small.toml"


def _overstated_objective(req):
    """Allocator that reports one more than the objective it achieved."""
    result = allocate(req)
    return dataclasses.replace(result, objective_value=result.objective_value + 1)


class TestLoadConfig:
    """Test TOML loading and --set overrides."""

    def test_g_small_file(self):
        """Test the bundled G-small configuration."""
        config = load_config(G_SMALL)
        assert config.device.zone_pages == 32
        assert config.device.page_size == 4096
        assert config.strategy.label == "chunk-1"
        assert config.workload.kind is WorkloadKind.FIO
        assert config.workload.op_count == 32
        assert config.source == str(G_SMALL)

    def test_defaults_without_file(self):
        """Test the desk device and stripe strategy are the defaults."""
        config = load_config()
        assert config.device.zone_pages == 1408
        assert config.strategy.label == "stripe"
        assert config.workload.kind is WorkloadKind.OCCUPANCY

    def test_overrides(self):
        """Test dotted keys, bare sections and bare workload keys."""
        config = load_config(G_SMALL, ["strategy=stripe", "device.max_open_zones=3", "op_count=16"])
        assert config.strategy.label == "stripe"
        assert config.device.max_open_zones == 3
        assert config.workload.op_count == 16

    def test_chunk_label_override(self):
        """Test a chunk label selects the chunk size."""
        config = load_config(G_SMALL, ["strategy=chunk-2"])
        assert config.strategy.chunk_size == 2

    def test_device_profile_override(self):
        """Test a bare device override picks the profile."""
        assert load_config(None, ["device=zn540"]).device.zone_pages == 67584

    def test_list_override(self):
        """Test comma separated values become lists."""
        config = load_config(G_SMALL, ["workload=occupancy", "occupancies=25,50", "seeds=4"])
        assert config.workload.occupancies == [25, 50]
        assert config.workload.seeds == [4]

    def test_exponent_override(self):
        """Test an integral exponent literal sets an integer field."""
        config = load_config(G_SMALL, ["op_count=1e1"])
        assert config.workload.op_count == 10
        assert isinstance(config.workload.op_count, int)

    @pytest.mark.parametrize("text, expected", [
        ("1e3", 1000), ("4E4", 40000), ("2.0", 2), ("0.25", 0.25), ("-7", -7), ("1.5e1", 15),
    ])
    def test_numeric_override_values(self, text, expected):
        """Test numeric override values keep floats only when they are not integral."""
        document = {"device": {}, "strategy": {}, "workload": {}}
        apply_override(document, f"total_ops={text}")
        value = document["workload"]["total_ops"]
        assert value == expected
        assert type(value) is type(expected)

    @pytest.mark.parametrize("assignment", ["op_count", "=3", "cache.size=4", "unknown_key=1"])
    def test_bad_override(self, assignment):
        """Test malformed overrides, unknown sections and unknown workload keys."""
        with pytest.raises(ConfigError):
            load_config(G_SMALL, [assignment])

    def test_chunk_size_not_dividing(self):
        """Test a chunk size that does not divide the blocks per LUN of a zone."""
        with pytest.raises(InvalidChunkSize):
            load_config(G_SMALL, ["strategy=chunk-3"])

    def test_missing_file(self, tmp_path):
        """Test a configuration path that does not exist."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_invalid_toml(self, tmp_path):
        """Test a file that is not TOML."""
        path = tmp_path / "broken.toml"
        path.write_text("[device\nprofile = ", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_section(self, tmp_path):
        """Test a top-level table other than device, strategy and workload."""
        path = tmp_path / "extra.toml"
        path.write_text('[device]\nprofile = "g-small"\n\n[cache]\nsize = 4\n', encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_apply_override_document(self):
        """Test overrides edit the raw document in place."""
        document = {"device": {}, "strategy": {}, "workload": {}}
        apply_override(document, "device=g-small")
        apply_override(document, "workload=zenfs")
        apply_override(document, "finish_threshold=50")
        apply_override(document, "strategy.parallelism_relaxed=true")
        assert document == {
            "device": {"profile": "g-small"},
            "strategy": {"parallelism_relaxed": True},
            "workload": {"kind": "zenfs", "finish_threshold": 50},
        }


class TestRecipes:
    """Test canned experiment plans."""

    def test_unknown_recipe(self):
        """Test a recipe name that does not exist."""
        with pytest.raises(ConfigError):
            build_recipe("fig9", load_config(G_SMALL), "out")

    def test_occupancy_sweep_skips_unfit_chunks(self):
        """Test chunk-11 is dropped where a zone has two blocks per LUN."""
        plan = build_recipe("fig3a", load_config(G_SMALL), "out")
        assert [run.strategy for run in plan.runs] == ["direct", "lazy", "chunk-1", "chunk-2", "stripe"]
        assert all(run.workload is WorkloadKind.OCCUPANCY for run in plan.runs)

    def test_occupancy_sweep_on_zn540(self):
        """Test every strategy fits the ZN540 layout."""
        plan = build_recipe("fig3a", load_config(None, ["device=zn540"]), "out")
        assert len(plan.runs) == 6

    def test_interference_limited_by_open_zones(self):
        """Test writer counts stop at half the open zone slots."""
        plan = build_recipe("fig4a", load_config(G_SMALL), "out")
        assert {run.parameters["jobs"] for run in plan.runs} == {1}
        plan = build_recipe("fig4a", load_config(None, ["device=zn540"]), "out")
        assert {run.parameters["jobs"] for run in plan.runs} == set(range(1, 8))

    def test_throughput_limited_by_open_zones(self):
        """Test fio concurrency stays within the open zone slots."""
        plan = build_recipe("fig4b", load_config(G_SMALL), "out")
        assert {run.parameters["concurrency"] for run in plan.runs} == {1, 2}
        assert {run.parameters["pattern"] for run in plan.runs} == {p.value for p in FioPattern}


class TestCmdRun:
    """Test run execution and its artifacts."""

    def test_single_run_artifacts(self, tmp_path):
        """Test a fio run writes metrics, summary and an event trace."""
        summary = cmd_run(G_SMALL, out_dir=tmp_path)
        assert summary.plan == "single"
        assert summary.rows == 1
        assert summary.outcomes == {"completed": 1}

        metrics = pd.read_csv(tmp_path / "metrics.csv")
        row = metrics.iloc[0]
        assert row["run_id"] == "fio-chunk-1"
        assert row["makespan_us"] == 22400.0
        assert row["host_bytes"] == 32 * 4096
        assert row["dummy_bytes"] == 0

        document = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert document["total_blocks"] == 32
        trace = tmp_path / "fio-chunk-1" / "seed-0" / "events.jsonl"
        kinds = [json.loads(line)["kind"] for line in trace.read_text(encoding="utf-8").splitlines()]
        assert kinds.count("write") == 32
        assert kinds[0] == "alloc"

    def test_runs_are_reproducible(self, tmp_path):
        """Test two runs of one configuration produce identical bytes."""
        cmd_run(G_SMALL, out_dir=tmp_path / "a")
        cmd_run(G_SMALL, out_dir=tmp_path / "b")
        for name in ("metrics.csv", "fio-chunk-1/seed-0/events.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zenfs_reproducible(self, tmp_path):
        """Test a short ZenFS-lite run is reproducible from its seed."""
        overrides = ["workload=zenfs", "total_ops=400", "finish_threshold=50"]
        cmd_run(CONFIGS / "desk.toml", overrides, out_dir=tmp_path / "a", seeds=[2])
        cmd_run(CONFIGS / "desk.toml", overrides, out_dir=tmp_path / "b", seeds=[2])
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
        trace = "zenfs-stripe/seed-2/events.jsonl"
        assert (tmp_path / "a" / trace).read_bytes() == (tmp_path / "b" / trace).read_bytes()

    def test_metrics_replay_from_trace(self, tmp_path):
        """Test a ZenFS-lite metrics row is recomputed from its event trace."""
        overrides = ["workload=zenfs", "total_ops=3000", "finish_threshold=50"]
        cmd_run(CONFIGS / "desk.toml", overrides, out_dir=tmp_path, seeds=[1])
        row = pd.read_csv(tmp_path / "metrics.csv").iloc[0]
        geometry = load_config(CONFIGS / "desk.toml").device

        events = read_trace(trace_path(tmp_path, row["run_id"], 1))
        replayed = replay_metrics(events, geometry.page_size, end_time=row["ops_completed"],
                                  capacity_bytes=geometry.capacity_bytes)

        assert row["outcome"] == "completed"
        assert replayed["host_bytes"] == row["host_bytes"]
        assert replayed["dummy_bytes"] == row["dummy_bytes"]
        assert replayed["dlwa"] == pytest.approx(row["dlwa"])
        assert replayed["sa_bytes"] == pytest.approx(row["sa_bytes"])
        assert replayed["sa_norm"] == pytest.approx(row["sa_norm"])

    def test_seeds_replace_plan_seeds(self, tmp_path):
        """Test explicit seeds give one row per seed."""
        summary = cmd_run(G_SMALL, out_dir=tmp_path, seeds=[3, 5])
        assert summary.rows == 2
        assert list(pd.read_csv(tmp_path / "metrics.csv")["seed"]) == [3, 5]
        assert (tmp_path / "fio-chunk-1" / "seed-5" / "events.jsonl").is_file()

    def test_concurrency_over_open_limit(self, tmp_path):
        """Test more fio jobs than open zone slots."""
        with pytest.raises(ConfigError):
            cmd_run(G_SMALL, ["concurrency=3"], out_dir=tmp_path)

    def test_environment_defaults(self, tmp_path, monkeypatch):
        """Test the config path and output directory fall back to the environment."""
        monkeypatch.setenv("ZNS_SIM_CONFIG", str(G_SMALL))
        monkeypatch.setenv("ZNS_SIM_OUT_DIR", str(tmp_path))
        summary = cmd_run()
        assert summary.output_dir == str(tmp_path)
        assert (tmp_path / "metrics.csv").is_file()


class TestCmdVerify:
    """Test the self-check suites."""

    def test_state_machine(self):
        """Test every state and event pair is checked."""
        report = cmd_verify("statemachine")
        assert report.passed
        assert report.checks == {"statemachine": 24}

    def test_allocator(self):
        """Test the production allocators match the oracle."""
        report = cmd_verify("allocator", instances=200)
        assert report.passed
        assert report.checks["allocator"] == 200

    def test_invariants(self):
        """Test short random command sequences keep every device consistent."""
        report = cmd_verify("invariants", commands=2000, seed=1)
        assert report.passed
        assert report.checks["invariants"] == 2000

    def test_invariants_count_distinct_commands(self):
        """Test a partial last sequence is counted once, not once per device."""
        checked, failures = verify_invariants(commands=SEQUENCE_LENGTH + 50, seed=2)
        assert failures == []
        assert checked == SEQUENCE_LENGTH + 50

    @pytest.mark.slow
    def test_invariants_full_sweep(self):
        """Test the default sweep of one hundred thousand random commands."""
        report = cmd_verify("invariants")
        assert report.passed
        assert report.checks["invariants"] == 100_000

    def test_unknown_scope(self):
        """Test a scope that does not exist."""
        with pytest.raises(ConfigError):
            cmd_verify("everything")

    def test_buggy_allocator_is_caught(self):
        """Test a wrong objective produces a replayable counterexample."""
        checked, failures = verify_allocator(200, seed=0, allocator=_overstated_objective)
        assert len(failures) == 1
        failure = failures[0]
        assert {"geometry", "elements", "allocator", "oracle", "problems"} <= set(failure)
        assert any("objective" in problem for problem in failure["problems"])
        assert checked == failure["instance"] + 1

    def test_buggy_allocator_fails_report(self):
        """Test a failing suite marks the report as not passed."""
        report = cmd_verify("allocator", instances=200, allocator=_overstated_objective)
        assert not report.passed
        assert report.failures[0]["suite"] == "allocator"


class TestCmdReport:
    """Test report tables."""

    def test_empty_directory(self, tmp_path):
        """Test a directory without runs."""
        with pytest.raises(MissingRuns):
            cmd_report(tmp_path)

    def test_missing_summary(self, tmp_path):
        """Test metrics without a summary."""
        cmd_run(G_SMALL, out_dir=tmp_path)
        (tmp_path / "summary.json").unlink()
        with pytest.raises(MissingRuns):
            cmd_report(tmp_path)

    def test_fio_tables(self, tmp_path):
        """Test a fio run yields the throughput and allocation tables only."""
        cmd_run(G_SMALL, out_dir=tmp_path)
        tables = cmd_report(tmp_path)
        assert set(tables.tables) == {"fig4b_throughput", "fig4d_allocation"}
        throughput = pd.read_csv(tmp_path / "fig4b_throughput.csv")
        assert throughput.iloc[0]["throughput_pps"] == pytest.approx(32 / 0.0224)
        allocation = pd.read_csv(tmp_path / "fig4d_allocation.csv")
        assert allocation.iloc[0]["allocations"] == 1

    def test_throughput_series(self, tmp_path):
        """Test a desk zone fill reports its 100 ms throughput windows and their spread."""
        overrides = ["workload=fio", "pattern=seq_write", "op_count=1408", "seeds=0"]
        cmd_run(CONFIGS / "desk.toml", overrides, out_dir=tmp_path)
        tables = cmd_report(tmp_path)
        assert {"fig4b_throughput", "fig4b_throughput_series"} <= set(tables.tables)
        series = pd.read_csv(tmp_path / "fig4b_throughput_series.csv")
        assert list(series["window_us"]) == [i * 100_000.0 for i in range(9)]
        assert series["throughput_pps"].between(1420.0, 1430.0).all()
        metrics = pd.read_csv(tmp_path / "metrics.csv")
        expected = round(float(series["throughput_pps"].std(ddof=0)), 4)
        assert metrics.iloc[0]["throughput_stddev"] == pytest.approx(expected)
        throughput = pd.read_csv(tmp_path / "fig4b_throughput.csv")
        assert throughput.iloc[0]["throughput_stddev"] == pytest.approx(expected)

    def test_occupancy_reduction(self, tmp_path):
        """Test the DLWA reduction at 25% occupancy on G-small."""
        cmd_run(G_SMALL, recipe="fig3a", out_dir=tmp_path)
        tables = cmd_report(tmp_path)
        assert "fig3a_dlwa" in tables.tables
        table = pd.read_csv(tmp_path / "fig3a_dlwa.csv").set_index(["strategy", "occupancy"])
        assert table.loc[("stripe", 25), "dlwa"] == 2.0
        assert table.loc[("stripe", 25), "reduction_pct"] == 50.0
        assert table.loc[("direct", 25), "dlwa"] == 4.0
        assert table.loc[("lazy", 25), "reduction_pct"] == 0.0
        assert (table.loc["stripe", "reduction_pct"] >= 0).all()


class TestCli:
    """Test command line exit codes."""

    def test_run(self, tmp_path, capsys):
        """Test a successful run prints its summary."""
        assert cli.main(["run", "--config", str(G_SMALL), "--out", str(tmp_path)]) == 0
        assert json.loads(capsys.readouterr().out)["rows"] == 1

    def test_bad_config(self, tmp_path):
        """Test a missing configuration file exits with 1."""
        assert cli.main(["run", "--config", str(tmp_path / "absent.toml")]) == 1

    def test_missing_runs(self, tmp_path):
        """Test a report of an empty directory exits with 1."""
        assert cli.main(["report", str(tmp_path)]) == 1

    def test_verify_pass(self):
        """Test a passing verification exits with 0."""
        assert cli.main(["verify", "--scope", "statemachine"]) == 0

    def test_verify_failure(self, mocker):
        """Test a failed verification exits with 2."""
        mocker.patch("cli.cmd_verify", return_value=VerifyReport(
            scope="allocator", passed=False, checks={"allocator": 1}, failures=[{"suite": "allocator"}]))
        assert cli.main(["verify", "--scope", "allocator"]) == 2

    @pytest.mark.parametrize("argv", [[], ["simulate"], ["run", "--recipe", "fig9"], ["run", "--seeds", "a,b"]])
    def test_usage_errors(self, argv):
        """Test argument errors exit with 1."""
        with pytest.raises(SystemExit) as exc_info:
            cli.main(argv)
        assert exc_info.value.code == 1
