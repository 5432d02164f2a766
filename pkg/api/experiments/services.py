"""
Experiment services: configuration loading, run execution and artifacts.

``cmd_run``, ``cmd_verify`` and ``cmd_report`` back both the command line and
the HTTP endpoints.
"""

from __future__ import annotations

import csv
import json
import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from pathlib import Path
from typing import Any, Iterable, Optional

from pydantic import ValidationError

from api.allocator.services import Allocator
from api.common.errors import ConfigError
from api.common.utils import parse_scalar
from api.engine.services import Simulator
from api.experiments.recipes import build_recipe
from api.experiments.schemas import (
    ExperimentConfig, ExperimentPlan, RunSpec, RunSummary, VerifyReport, WorkloadKind, WorkloadSettings,
)
from api.experiments.verification import DEFAULT_COMMANDS, run_verification
from api.geometry.schemas import DeviceGeometry, StrategyConfig
from api.geometry.services import validate_geometry, validate_strategy
from api.metrics.schemas import METRICS_COLUMNS, MetricsRow
from api.metrics.services import dlwa, throughput_stddev
from api.reports.schemas import ReportTables
from api.reports.services import build_reports
from api.workloads.schemas import FioJobSpec, FioPattern, KvMixSpec, ZenfsLiteConfig
from api.workloads.services import run_fio, run_interference_bench, run_wear_experiment, run_zenfs_lite
from api.zones.services import ZonedDevice
from api.zones.trace import TraceRecorder

logger = logging.getLogger(__name__)

SECTIONS = ("device", "strategy", "workload")
DEFAULT_PROFILE = "desk"
DEFAULT_STRATEGY = "stripe"
DEFAULT_OUT_DIR = "results"


# Configuration

def apply_override(document: dict[str, dict[str, Any]], assignment: str) -> None:
    """
    Apply one ``key=value`` override to a raw configuration document.

    ``section.key=value`` sets a key; a bare section name sets its kind
    (``workload=fio``) or, for the device, its profile; any other bare key
    goes to [workload].

    Raises:
        ConfigError: If the override is malformed or names an unknown section
    """
    key, sep, text = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"Override '{assignment}' is not of the form key=value")
    value = parse_scalar(text)
    if "." in key:
        section, _, name = key.partition(".")
    elif key == "device":
        section, name = key, "profile"
    elif key in SECTIONS:
        section, name = key, "kind"
    else:
        section, name = "workload", key
    if section not in SECTIONS:
        raise ConfigError(f"Unknown configuration section '{section}'", choices=list(SECTIONS))
    document.setdefault(section, {})[name] = value


def _strategy_section(section: dict[str, Any], geometry: DeviceGeometry) -> StrategyConfig:
    section = {"kind": DEFAULT_STRATEGY, **section}
    kind = section["kind"]
    if isinstance(kind, str) and kind.startswith("chunk-"):
        try:
            section.update(StrategyConfig.from_label(kind).model_dump(include={"kind", "chunk_size"}))
        except ValueError as e:
            raise ConfigError(f"Invalid strategy '{kind}': {e}") from e
    return validate_strategy(section, geometry)


def load_config(path: Optional[str | Path] = None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Load and validate an experiment configuration.

    Args:
        path: TOML file with [device], [strategy] and [workload] sections
        overrides: ``--set`` assignments applied on top of the file

    Returns:
        ExperimentConfig: Validated device, strategy and workload settings

    Raises:
        ConfigError: If the file is unreadable or any section is invalid
    """
    document: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                document = tomllib.load(handle)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file {path} not found", path=str(path)) from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid TOML: {e}", path=str(path)) from e
    unknown = sorted(set(document) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown configuration section(s): {', '.join(unknown)}", sections=unknown)

    sections = {name: dict(document.get(name, {})) for name in SECTIONS}
    for assignment in overrides:
        apply_override(sections, assignment)

    geometry = validate_geometry(sections["device"] or {"profile": DEFAULT_PROFILE})
    strategy = _strategy_section(sections["strategy"], geometry)
    try:
        workload = WorkloadSettings(**sections["workload"])
    except ValidationError as e:
        raise ConfigError(f"Invalid workload configuration: {e}") from e
    return ExperimentConfig(device=geometry, strategy=strategy, workload=workload,
                            source=str(path) if path is not None else None)


def single_run_plan(config: ExperimentConfig, output_dir: str) -> ExperimentPlan:
    """A plan running the configured strategy and workload once per configured seed."""
    workload = config.workload
    run = RunSpec(
        run_id=f"{workload.kind.value}-{config.strategy.label}",
        strategy=config.strategy.label,
        workload=workload.kind,
        seeds=workload.seeds,
    )
    return ExperimentPlan(name="single", runs=[run], output_dir=output_dir)


# Runs

def _run_occupancy(run: RunSpec, settings: WorkloadSettings, geometry: DeviceGeometry,
                   strategy: StrategyConfig, seed: int, trace: TraceRecorder) -> list[MetricsRow]:
    rows = []
    for occupancy in settings.occupancies:
        trace.context["occupancy"] = occupancy
        device = ZonedDevice(geometry, strategy, trace=trace)
        sim = Simulator(geometry, device)
        pages = max(1, round(occupancy / 100 * geometry.zone_pages))
        sim.execute(device.zone_write(0, 0, pages), 0.0)
        sim.execute(device.finish_zone(0).receipts, sim.horizon)
        ledger = device.ledger
        rows.append(MetricsRow(
            strategy=strategy.label, workload=run.workload.value, run_id=run.run_id, seed=seed,
            occupancy=occupancy, dlwa=round(dlwa(ledger), 6), makespan_us=sim.horizon,
            host_bytes=ledger.host_pages * geometry.page_size,
            dummy_bytes=ledger.device_pages * geometry.page_size,
        ))
        logger.info("%s occupancy %d%%: DLWA %.4f", strategy.label, occupancy, dlwa(ledger))
    return rows


def _run_fio(run: RunSpec, settings: WorkloadSettings, geometry: DeviceGeometry,
             strategy: StrategyConfig, seed: int, trace: TraceRecorder) -> list[MetricsRow]:
    concurrency = settings.concurrency
    if concurrency > min(geometry.zones_total, geometry.max_open_zones):
        raise ConfigError(f"concurrency={concurrency} exceeds the open zone limit {geometry.max_open_zones}",
                          concurrency=concurrency)
    op_count = min(settings.op_count, geometry.zone_pages // settings.request_pages)
    if op_count < settings.op_count:
        logger.warning("fio op_count capped at %d to stay inside one zone", op_count)

    device = ZonedDevice(geometry, strategy, trace=trace)
    sim = Simulator(geometry, device)
    if settings.pattern is not FioPattern.SEQ_WRITE:
        for zone_id in range(concurrency):
            sim.execute(device.zone_write(zone_id, 0, op_count * settings.request_pages), sim.horizon)
    specs = [
        FioJobSpec(pattern=settings.pattern, zone_id=zone_id, op_count=op_count,
                   request_pages=settings.request_pages, start_time=sim.horizon,
                   rng_seed=seed * 1000 + zone_id)
        for zone_id in range(concurrency)
    ]
    report = run_fio(specs, device, sim)
    return [MetricsRow(
        strategy=strategy.label, workload=run.workload.value, run_id=run.run_id, seed=seed,
        jobs=concurrency, pattern=settings.pattern.value,
        throughput_pps=report.aggregate_throughput_pps,
        throughput_stddev=throughput_stddev(report.throughput_windows), makespan_us=report.makespan_us,
        host_bytes=device.ledger.host_pages * geometry.page_size,
        dummy_bytes=device.ledger.device_pages * geometry.page_size,
    )]


def _run_interference(run: RunSpec, settings: WorkloadSettings, geometry: DeviceGeometry,
                      strategy: StrategyConfig, seed: int, trace: TraceRecorder) -> list[MetricsRow]:
    report = run_interference_bench(settings.jobs, geometry, strategy, fill_fraction=settings.fill_fraction,
                                    writer_ops=settings.writer_ops, seed=seed, trace=trace)
    return [MetricsRow(
        strategy=strategy.label, workload=run.workload.value, run_id=run.run_id, seed=seed,
        jobs=settings.jobs, interference=report.interference_factor,
        throughput_pps=report.contended_throughput_pps,
        dummy_bytes=report.dummy_pages * geometry.page_size,
    )]


def _host_model(settings: WorkloadSettings, seed: int) -> tuple[KvMixSpec, ZenfsLiteConfig]:
    kv = KvMixSpec(total_ops=settings.total_ops, value_pages=settings.value_pages,
                   value_pages_max=settings.value_pages_max, rng_seed=seed)
    zf = ZenfsLiteConfig(finish_threshold=settings.finish_threshold,
                         max_active_zones=settings.max_active_zones,
                         flexible_zones=settings.flexible_zones, rng_seed=seed)
    return kv, zf


def _run_zenfs(run: RunSpec, settings: WorkloadSettings, geometry: DeviceGeometry,
               strategy: StrategyConfig, seed: int, trace: TraceRecorder) -> list[MetricsRow]:
    kv, zf = _host_model(settings, seed)
    report = run_zenfs_lite(kv, zf, ZonedDevice(geometry, strategy, trace=trace))
    return [MetricsRow(
        strategy=strategy.label, workload=run.workload.value, run_id=run.run_id, seed=seed,
        finish_threshold=zf.finish_threshold, dlwa=report.dlwa, sa_bytes=report.sa_bytes,
        sa_norm=report.sa_norm, wear_median=report.wear.median, wear_stddev=report.wear.stddev,
        makespan_us=report.makespan_us, host_bytes=report.host_bytes, dummy_bytes=report.dummy_bytes,
        erase_total=report.wear.total_erases, ops_completed=report.ops_completed, outcome=report.outcome,
    )]


def _run_wear(run: RunSpec, settings: WorkloadSettings, geometry: DeviceGeometry,
              strategy: StrategyConfig, seed: int, trace: TraceRecorder) -> list[MetricsRow]:
    kv, zf = _host_model(settings, seed)
    report = run_wear_experiment(kv, zf, ZonedDevice(geometry, strategy, trace=trace),
                                 repetitions=settings.repetitions)
    outcomes = {repetition.outcome for repetition in report.runs}
    return [MetricsRow(
        strategy=strategy.label, workload=run.workload.value, run_id=run.run_id, seed=seed,
        finish_threshold=zf.finish_threshold,
        wear_median=report.wear.median, wear_stddev=report.wear.stddev,
        erase_total=report.wear.total_erases,
        host_bytes=sum(repetition.host_bytes for repetition in report.runs),
        dummy_bytes=sum(repetition.dummy_bytes for repetition in report.runs),
        ops_completed=sum(repetition.ops_completed for repetition in report.runs),
        makespan_us=report.runs[-1].makespan_us,
        outcome="out_of_space" if "out_of_space" in outcomes else "completed",
    )]


RUNNERS = {
    WorkloadKind.OCCUPANCY: _run_occupancy,
    WorkloadKind.FIO: _run_fio,
    WorkloadKind.INTERFERENCE: _run_interference,
    WorkloadKind.ZENFS: _run_zenfs,
    WorkloadKind.WEAR: _run_wear,
}


def trace_path(output_dir: str | Path, run_id: str, seed: int) -> Path:
    return Path(output_dir) / run_id / f"seed-{seed}" / "events.jsonl"


def execute_run(run: RunSpec, config: ExperimentConfig, seed: int, output_dir: str) -> list[MetricsRow]:
    """
    Execute one run for one seed and stream its event trace.

    Returns:
        list[MetricsRow]: One row, or one per occupancy for occupancy sweeps

    Raises:
        ConfigError: If the run's strategy or parameters are invalid
    """
    geometry = config.device
    strategy = validate_strategy(run.strategy, geometry).model_copy(
        update={"parallelism_relaxed": config.strategy.parallelism_relaxed})
    try:
        settings = WorkloadSettings(**{**config.workload.model_dump(), **run.parameters,
                                       "kind": run.workload})
    except ValidationError as e:
        raise ConfigError(f"Invalid parameters for run {run.run_id}: {e}") from e

    logger.info("Run %s seed %d: %s on %s", run.run_id, seed, strategy.label, run.workload.value)
    with TraceRecorder(trace_path(output_dir, run.run_id, seed), keep=False) as trace:
        return RUNNERS[run.workload](run, settings, geometry, strategy, seed, trace)


def execute_plan(plan: ExperimentPlan, config: ExperimentConfig, workers: int = 1) -> list[MetricsRow]:
    """Execute every (run, seed) of a plan; rows keep plan order whatever the worker count."""
    tasks = [(run, seed) for run in plan.runs for seed in run.seeds]
    runs = [run for run, _ in tasks]
    seeds = [seed for _, seed in tasks]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_run, runs, repeat(config), seeds, repeat(plan.output_dir)))
    else:
        results = [execute_run(run, config, seed, plan.output_dir) for run, seed in tasks]
    return [row for rows in results for row in rows]


def write_metrics(rows: list[MetricsRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=METRICS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if value is None else value for key, value in row.model_dump().items()})


def write_summary(plan: ExperimentPlan, config: ExperimentConfig, rows: list[MetricsRow], path: Path) -> dict:
    outcomes = Counter(row.outcome for row in rows)
    summary = {
        "plan": plan.model_dump(mode="json"),
        "device": config.device.model_dump(mode="json"),
        "strategy": config.strategy.model_dump(mode="json"),
        "workload": config.workload.model_dump(mode="json"),
        "total_blocks": config.device.total_blocks,
        "rows": len(rows),
        "outcomes": dict(sorted(outcomes.items())),
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def cmd_run(config_path: Optional[str | Path] = None, overrides: Iterable[str] = (),
            recipe: Optional[str] = None, out_dir: Optional[str | Path] = None,
            seeds: Optional[list[int]] = None, workers: int = 1) -> RunSummary:
    """
    Run a recipe, or the single configured experiment, and write its artifacts.

    Args:
        config_path: TOML config; ``ZNS_SIM_CONFIG`` when omitted
        overrides: ``key=value`` assignments
        recipe: Recipe name, e.g. ``fig3a``
        out_dir: Output directory; ``ZNS_SIM_OUT_DIR`` or ``results`` when omitted
        seeds: Seeds replacing those of every run
        workers: Independent worker processes

    Returns:
        RunSummary: Where the artifacts went and the outcome counts

    Raises:
        ConfigError: For invalid configuration or run parameters
    """
    config_path = config_path or os.environ.get("ZNS_SIM_CONFIG") or None
    config = load_config(config_path, overrides)
    output_dir = Path(out_dir or os.environ.get("ZNS_SIM_OUT_DIR", DEFAULT_OUT_DIR))

    plan = build_recipe(recipe, config, str(output_dir)) if recipe else single_run_plan(config, str(output_dir))
    if seeds:
        plan = plan.model_copy(update={"runs": [run.model_copy(update={"seeds": list(seeds)})
                                                for run in plan.runs]})
    logger.info("Plan %s: %d run(s) into %s", plan.name, len(plan.runs), output_dir)

    rows = execute_plan(plan, config, workers)
    metrics_path = output_dir / "metrics.csv"
    write_metrics(rows, metrics_path)
    summary = write_summary(plan, config, rows, output_dir / "summary.json")
    return RunSummary(plan=plan.name, output_dir=str(output_dir), metrics_path=str(metrics_path),
                      runs=len(plan.runs), rows=len(rows), outcomes=summary["outcomes"])


def cmd_verify(scope: str = "all", instances: int = 1000, commands: int = DEFAULT_COMMANDS, seed: int = 0,
               allocator: Optional[Allocator] = None) -> VerifyReport:
    """
    Run the self-check suites.

    Raises:
        ConfigError: If the scope is unknown
    """
    try:
        return run_verification(scope, instances, commands, seed, allocator)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def cmd_report(run_dir: Optional[str | Path] = None) -> ReportTables:
    """
    Build the report tables of a run directory.

    Raises:
        MissingRuns: If the directory holds no completed runs
    """
    return build_reports(run_dir or os.environ.get("ZNS_SIM_OUT_DIR", DEFAULT_OUT_DIR))
