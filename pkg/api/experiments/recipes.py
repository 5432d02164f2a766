"""
Canned experiment plans, one per report table family.
"""

from __future__ import annotations

import logging
from typing import Callable

from api.common.errors import ConfigError, InvalidChunkSize
from api.experiments.schemas import ExperimentConfig, ExperimentPlan, RunSpec, WorkloadKind
from api.geometry.services import validate_strategy
from api.workloads.schemas import FioPattern

logger = logging.getLogger(__name__)

ALL_STRATEGIES = ["direct", "lazy", "chunk-1", "chunk-2", "chunk-11", "stripe"]
INTERFERENCE_STRATEGIES = ["direct", "chunk-1", "chunk-2", "chunk-11", "stripe"]
HOST_STRATEGIES = ["lazy", "stripe"]
THRESHOLDS = [0, 10, 50, 90, 99]
WORKLOAD_SEEDS = [1, 2, 3]
FIO_CONCURRENCY = [1, 2, 4]


def _occupancy_sweep(config: ExperimentConfig) -> list[RunSpec]:
    return [
        RunSpec(run_id=f"fig3a-{label}", strategy=label, workload=WorkloadKind.OCCUPANCY,
                parameters={"occupancies": [10, 25, 50, 75, 95]}, seeds=[0])
        for label in ALL_STRATEGIES
    ]


def _threshold_sweep(config: ExperimentConfig) -> list[RunSpec]:
    return [
        RunSpec(run_id=f"fig3bc-{label}-t{threshold}", strategy=label, workload=WorkloadKind.ZENFS,
                parameters={"finish_threshold": threshold}, seeds=WORKLOAD_SEEDS)
        for label in HOST_STRATEGIES
        for threshold in THRESHOLDS
    ]


def _wear(config: ExperimentConfig) -> list[RunSpec]:
    return [
        RunSpec(run_id=f"fig3d-{label}", strategy=label, workload=WorkloadKind.WEAR,
                parameters={"finish_threshold": 90, "repetitions": 8}, seeds=[0])
        for label in HOST_STRATEGIES
    ]


def _open_slots(config: ExperimentConfig) -> int:
    return min(config.device.zones_total, config.device.max_open_zones)


def _interference(config: ExperimentConfig) -> list[RunSpec]:
    # each writer needs its own zone plus one zone to finish
    max_jobs = min(7, _open_slots(config) // 2)
    return [
        RunSpec(run_id=f"fig4a-{label}-j{jobs}", strategy=label, workload=WorkloadKind.INTERFERENCE,
                parameters={"jobs": jobs}, seeds=WORKLOAD_SEEDS)
        for label in INTERFERENCE_STRATEGIES
        for jobs in range(1, max_jobs + 1)
    ]


def _throughput(config: ExperimentConfig) -> list[RunSpec]:
    return [
        RunSpec(run_id=f"fig4b-{label}-{pattern.value}-c{concurrency}", strategy=label,
                workload=WorkloadKind.FIO,
                parameters={"pattern": pattern.value, "concurrency": concurrency}, seeds=[0])
        for label in ALL_STRATEGIES
        for pattern in FioPattern
        for concurrency in FIO_CONCURRENCY
        if concurrency <= _open_slots(config)
    ]


RECIPES: dict[str, Callable[[ExperimentConfig], list[RunSpec]]] = {
    "fig3a": _occupancy_sweep,
    "fig3bc": _threshold_sweep,
    "fig3d": _wear,
    "fig4a": _interference,
    "fig4b": _throughput,
}


def build_recipe(name: str, config: ExperimentConfig, output_dir: str) -> ExperimentPlan:
    """
    Expand a recipe into a plan, dropping strategies the geometry cannot host.

    Raises:
        ConfigError: If the recipe is unknown
    """
    if name not in RECIPES:
        raise ConfigError(f"Unknown recipe '{name}'", choices=sorted(RECIPES))
    runs = []
    for run in RECIPES[name](config):
        try:
            validate_strategy(run.strategy, config.device)
        except InvalidChunkSize:
            logger.warning("Skipping %s: %s does not fit E=%d", run.run_id, run.strategy,
                           config.device.blocks_per_lun_per_zone)
            continue
        runs.append(run)
    return ExperimentPlan(name=name, runs=runs, output_dir=output_dir)
