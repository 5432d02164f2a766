"""
Integration tests for the experiment API endpoints.
"""
from unittest.mock import patch

import pytest
from fastapi.testclient import TestClient

from api.common.errors import ConfigError, MissingRuns
from api.experiments.schemas import RunSummary, VerifyReport
from api.reports.schemas import ReportTables


def _summary(**overrides):
    values = dict(plan="single", output_dir="results", metrics_path="results/metrics.csv",
                  runs=1, rows=1, outcomes={"completed": 1})
    values.update(overrides)
    return RunSummary(**values)


class TestRoot:
    """Test the root endpoint."""

    def test_root(self, client):
        """Test the service announces itself."""
        response = client.get("/")
        assert response.status_code == 200
        assert response.json() == {"message": "Zone Allocation Simulator"}


class TestRunEndpoint:
    """Test POST /experiments/runs."""

    def test_run_success(self, client):
        """Test a run returns its summary."""
        with patch('api.experiments.routers.cmd_run') as mock_run:
            mock_run.return_value = _summary()

            response = client.post("/experiments/runs", json={
                "config_path": "configs/g-small.toml",
                "overrides": ["strategy=stripe"],
                "seeds": [1, 2],
            })

            assert response.status_code == 200
            data = response.json()
            assert data["status"] == "success"
            assert data["data"]["rows"] == 1
            kwargs = mock_run.call_args.kwargs
            assert kwargs["config_path"] == "configs/g-small.toml"
            assert kwargs["overrides"] == ["strategy=stripe"]
            assert kwargs["seeds"] == [1, 2]
            assert kwargs["workers"] == 1

    def test_run_config_error(self, client):
        """Test configuration errors are wrapped with their status code."""
        with patch('api.experiments.routers.cmd_run') as mock_run:
            mock_run.side_effect = ConfigError("Unknown recipe 'fig9'", choices=["fig3a"])

            response = client.post("/experiments/runs", json={"recipe": "fig9"})

            assert response.status_code == 200  # JSendResponse wraps errors
            data = response.json()
            assert data["status"] == "error"
            assert data["code"] == 400
            assert data["message"] == "Unknown recipe 'fig9'"

    def test_run_unexpected_error(self, test_app):
        """Test unexpected exceptions reach the server's 500 handler unwrapped."""
        client = TestClient(test_app, raise_server_exceptions=False)
        with patch('api.experiments.routers.cmd_run') as mock_run:
            mock_run.side_effect = RuntimeError("disk full")

            response = client.post("/experiments/runs", json={})

            assert response.status_code == 500
            assert "status" not in response.text

    def test_run_unexpected_error_propagates(self, client):
        """Test unexpected exceptions are not swallowed by the handler."""
        with patch('api.experiments.routers.cmd_run') as mock_run:
            mock_run.side_effect = RuntimeError("disk full")

            with pytest.raises(RuntimeError, match="disk full"):
                client.post("/experiments/runs", json={})

    def test_run_invalid_workers(self, client):
        """Test request validation rejects zero workers."""
        response = client.post("/experiments/runs", json={"workers": 0})
        assert response.status_code == 422


class TestVerifyEndpoint:
    """Test POST /experiments/verify."""

    def test_verify_passed(self, client):
        """Test a passing verification is a success."""
        with patch('api.experiments.routers.cmd_verify') as mock_verify:
            mock_verify.return_value = VerifyReport(scope="statemachine", passed=True,
                                                    checks={"statemachine": 24})

            response = client.post("/experiments/verify", json={"scope": "statemachine"})

            data = response.json()
            assert data["status"] == "success"
            assert data["data"]["checks"] == {"statemachine": 24}
            mock_verify.assert_called_once_with("statemachine", 1000, 100_000, 0)

    def test_verify_failed(self, client):
        """Test a failed verification returns the counterexample as fail data."""
        failure = {"suite": "allocator", "problems": ["objective 3 != oracle 2"]}
        with patch('api.experiments.routers.cmd_verify') as mock_verify:
            mock_verify.return_value = VerifyReport(scope="allocator", passed=False,
                                                    checks={"allocator": 7}, failures=[failure])

            response = client.post("/experiments/verify", json={"scope": "allocator"})

            data = response.json()
            assert data["status"] == "fail"
            assert data["data"]["failures"] == [failure]

    def test_verify_unknown_scope(self, client):
        """Test an unknown scope is a configuration error."""
        with patch('api.experiments.routers.cmd_verify') as mock_verify:
            mock_verify.side_effect = ConfigError("Unknown verify scope 'everything'")

            response = client.post("/experiments/verify", json={"scope": "everything"})

            data = response.json()
            assert data["status"] == "error"
            assert data["code"] == 400


class TestReportEndpoint:
    """Test GET /experiments/reports."""

    def test_report_success(self, client):
        """Test written tables are listed."""
        with patch('api.experiments.routers.cmd_report') as mock_report:
            mock_report.return_value = ReportTables(
                run_dir="results", tables={"fig3a_dlwa": "results/fig3a_dlwa.csv"})

            response = client.get("/experiments/reports?run_dir=results")

            data = response.json()
            assert data["status"] == "success"
            assert data["data"]["tables"] == {"fig3a_dlwa": "results/fig3a_dlwa.csv"}
            mock_report.assert_called_once_with("results")

    def test_report_missing_runs(self, client):
        """Test a directory without runs is a 404 error."""
        with patch('api.experiments.routers.cmd_report') as mock_report:
            mock_report.side_effect = MissingRuns("No metrics.csv in empty")

            response = client.get("/experiments/reports?run_dir=empty")

            data = response.json()
            assert data["status"] == "error"
            assert data["code"] == 404
            assert data["message"] == "No metrics.csv in empty"

    def test_report_end_to_end(self, client, tmp_path):
        """Test a report of an empty directory through the real service."""
        response = client.get(f"/experiments/reports?run_dir={tmp_path}")
        data = response.json()
        assert data["status"] == "error"
        assert data["code"] == 404
