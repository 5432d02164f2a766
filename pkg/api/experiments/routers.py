"""
FastAPI routers for experiment endpoints.
Runs, verification and reports are synchronous simulations, so the handlers are
plain functions executed in the server's thread pool.
"""

from typing import Optional

from fastapi import APIRouter, Query

from api.common.errors import SimulationError
from api.common.schemas import JSendResponse
from api.experiments.schemas import RunRequest, RunSummary, VerifyReport, VerifyRequest
from api.experiments.services import cmd_report, cmd_run, cmd_verify
from api.reports.schemas import ReportTables

router = APIRouter()


@router.post("/runs", response_model=JSendResponse[RunSummary])
def run_experiment(request: RunRequest):
    """
    Run a recipe or a single configured experiment.

    Args:
        request: Config path, overrides, recipe, output directory and seeds

    Returns:
        JSendResponse containing the run summary
    """
    try:
        summary = cmd_run(
            config_path=request.config_path,
            overrides=request.overrides,
            recipe=request.recipe,
            out_dir=request.out_dir,
            seeds=request.seeds,
            workers=request.workers,
        )
        return JSendResponse.success(summary)
    except SimulationError as e:
        return JSendResponse.error(message=str(e.detail), code=e.status_code)


@router.post("/verify", response_model=JSendResponse[VerifyReport])
def verify(request: VerifyRequest):
    """
    Run the allocator, state machine and invariant self-checks.

    Returns:
        JSendResponse with the report; ``fail`` carries the first counterexample
    """
    try:
        report = cmd_verify(request.scope, request.instances, request.commands, request.seed)
        if not report.passed:
            return JSendResponse.fail(report.model_dump())
        return JSendResponse.success(report)
    except SimulationError as e:
        return JSendResponse.error(message=str(e.detail), code=e.status_code)


@router.get("/reports", response_model=JSendResponse[ReportTables])
def build_report(
        run_dir: Optional[str] = Query(None, description="Output directory of a previous run")
):
    """
    Write the report tables of a run directory.

    Args:
        run_dir: Directory holding metrics.csv and summary.json

    Returns:
        JSendResponse containing the written table paths
    """
    try:
        return JSendResponse.success(cmd_report(run_dir))
    except SimulationError as e:
        return JSendResponse.error(message=str(e.detail), code=e.status_code)
