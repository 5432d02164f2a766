"""
Pydantic models for experiment configuration, plans, verification and report
results, plus the request bodies of the HTTP endpoints.
"""

from __future__ import annotations

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from api.geometry.schemas import DeviceGeometry, StrategyConfig
from api.workloads.schemas import FioPattern


class WorkloadKind(str, Enum):
    OCCUPANCY = "occupancy"
    FIO = "fio"
    INTERFERENCE = "interference"
    ZENFS = "zenfs"
    WEAR = "wear"


class WorkloadSettings(BaseModel):
    """The [workload] section. Only the fields of the chosen kind are used."""
    model_config = ConfigDict(extra="forbid")

    kind: WorkloadKind = WorkloadKind.OCCUPANCY
    seeds: List[int] = Field(default_factory=lambda: [0])
    # occupancy sweep
    occupancies: List[int] = Field(default_factory=lambda: [10, 25, 50, 75, 95])
    # fio
    pattern: FioPattern = FioPattern.SEQ_WRITE
    concurrency: int = Field(1, ge=1)
    op_count: int = Field(256, ge=1)
    request_pages: int = Field(1, ge=1)
    # interference
    jobs: int = Field(5, ge=1, le=7)
    writer_ops: int = Field(200, ge=1)
    fill_fraction: float = Field(0.4, gt=0, lt=1)
    # zenfs and wear
    finish_threshold: int = Field(90, ge=0, le=99)
    total_ops: int = Field(40_000, ge=1)
    max_active_zones: int = Field(3, ge=1)
    flexible_zones: bool = True
    value_pages: int = Field(1, ge=1)
    value_pages_max: Optional[int] = Field(None, ge=1)
    repetitions: int = Field(8, ge=1)

    @field_validator('occupancies')
    @classmethod
    def occupancies_are_percentages(cls, value):
        if not value or any(not 0 < occupancy <= 100 for occupancy in value):
            raise ValueError("occupancies must be percentages in (0, 100]")
        return value

    @field_validator('seeds', 'occupancies', mode='before')
    @classmethod
    def scalar_as_list(cls, value):
        if isinstance(value, int):
            return [value]
        return value


class ExperimentConfig(BaseModel):
    """Validated configuration document."""
    device: DeviceGeometry
    strategy: StrategyConfig
    workload: WorkloadSettings
    source: Optional[str] = None


class RunSpec(BaseModel):
    """One run of a plan: a strategy on a workload, repeated for every seed."""
    run_id: str = Field(..., pattern=r"^[A-Za-z0-9_.-]+$")
    strategy: str
    workload: WorkloadKind
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=lambda: [0])


class ExperimentPlan(BaseModel):
    name: str
    runs: List[RunSpec]
    output_dir: str

    @field_validator('runs')
    @classmethod
    def run_ids_are_unique(cls, value):
        ids = [run.run_id for run in value]
        duplicates = sorted({run_id for run_id in ids if ids.count(run_id) > 1})
        if duplicates:
            raise ValueError(f"duplicate run ids: {duplicates}")
        return value


class RunSummary(BaseModel):
    plan: str
    output_dir: str
    metrics_path: str
    runs: int
    rows: int
    outcomes: Dict[str, int]


class VerifyReport(BaseModel):
    scope: str
    passed: bool
    checks: Dict[str, int] = Field(..., description="Instances or commands checked per suite")
    failures: List[Dict[str, Any]] = Field(default_factory=list)


class RunRequest(BaseModel):
    config_path: Optional[str] = None
    overrides: List[str] = Field(default_factory=list)
    recipe: Optional[str] = None
    out_dir: Optional[str] = None
    seeds: Optional[List[int]] = None
    workers: int = Field(1, ge=1)


class VerifyRequest(BaseModel):
    scope: str = "all"
    instances: int = Field(1000, ge=1)
    commands: int = Field(100_000, ge=1)
    seed: int = 0
