"""
Workload specifications and reports: raw-device fio-like jobs, the FINISH
interference bench and the ZenFS-lite key-value host model.
"""

from __future__ import annotations

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from api.metrics.schemas import WearStats

FULL_SCALE_OPS = 4_000_000
DESK_SCALE_DIVISOR = 100


class FioPattern(str, Enum):
    SEQ_WRITE = "seq_write"
    SEQ_READ = "seq_read"
    RAND_READ = "rand_read"


class FioJobSpec(BaseModel):
    """One synchronous fio-like job bound to a dedicated zone."""
    pattern: FioPattern
    zone_id: int = Field(..., ge=0)
    op_count: int = Field(..., ge=1)
    request_pages: int = Field(1, ge=1, description="Pages per request")
    start_time: float = Field(0.0, ge=0, description="Virtual submit time of the first op (us)")
    rng_seed: int = 0


class FioJobReport(BaseModel):
    job_id: int
    pattern: FioPattern
    zone_id: int
    ops: int
    pages: int
    makespan_us: float
    throughput_pps: float
    latencies_us: List[float]


class FioReport(BaseModel):
    jobs: List[FioJobReport]
    makespan_us: float
    aggregate_throughput_pps: float
    throughput_windows: List[Tuple[float, float]] = Field(
        default_factory=list, description="(window start us, pages/s) of every complete window")


class InterferenceReport(BaseModel):
    strategy: str
    n_jobs: int
    fill_fraction: float
    fill_pages: int
    dummy_pages: int
    base_throughput_pps: float
    contended_throughput_pps: float
    interference_factor: float


class LifetimeClass(BaseModel):
    """A write-lifetime hint class of the host file system."""
    name: str
    weight: float = Field(..., gt=0, description="Share of writes in this class")
    file_pages: int = Field(..., ge=1, description="Mean file size in pages")
    lifetime_ops: int = Field(..., ge=1, description="Mean file lifetime in host operations")


DEFAULT_LIFETIME_CLASSES = [
    LifetimeClass(name="short", weight=0.4, file_pages=32, lifetime_ops=200),
    LifetimeClass(name="medium", weight=0.3, file_pages=64, lifetime_ops=600),
    LifetimeClass(name="long", weight=0.2, file_pages=128, lifetime_ops=1_200),
    LifetimeClass(name="extreme", weight=0.1, file_pages=256, lifetime_ops=12_000),
]


class ZenfsLiteConfig(BaseModel):
    """
    Host placement policy.

    ``finish_threshold`` T allows finishing a zone once its occupancy reaches
    (100 - T)% of the zone; T=0 never finishes. ``max_active_zones`` is the
    number of zones the file system keeps open for data. With
    ``flexible_zones`` the host asks the device for an extra zone when it
    needs a new one and none is Empty, and writes with APPEND.
    """
    finish_threshold: int = Field(..., ge=0, le=99)
    lifetime_classes: List[LifetimeClass] = Field(default_factory=lambda: list(DEFAULT_LIFETIME_CLASSES))
    max_active_zones: int = Field(3, ge=1)
    flexible_zones: bool = True
    rng_seed: int = 0

    @field_validator('lifetime_classes')
    @classmethod
    def classes_are_named_uniquely(cls, value):
        names = [lifetime.name for lifetime in value]
        if not value:
            raise ValueError("at least one lifetime class is required")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate lifetime class names: {names}")
        return value


class KvMixSpec(BaseModel):
    """Key-value operation mix driving ZenFS-lite."""
    total_ops: int = Field(FULL_SCALE_OPS // DESK_SCALE_DIVISOR, ge=1)
    insert: float = Field(0.50, ge=0)
    delete: float = Field(0.10, ge=0)
    point_query: float = Field(0.15, ge=0)
    update: float = Field(0.25, ge=0)
    value_pages: int = Field(1, ge=1, description="Smallest value size in pages")
    value_pages_max: Optional[int] = Field(None, ge=1, description="Largest value size in pages (uniform)")
    rng_seed: int = 0

    @model_validator(mode='after')
    def ratios_sum_to_one(self):
        total = self.insert + self.delete + self.point_query + self.update
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"operation ratios must sum to 1, got {total}")
        if self.value_pages_max is not None and self.value_pages_max < self.value_pages:
            raise ValueError("value_pages_max must be at least value_pages")
        return self


class ZenfsReport(BaseModel):
    strategy: str
    finish_threshold: int
    outcome: str = Field(..., description="completed or out_of_space")
    ops_completed: int
    dlwa: Optional[float] = None
    sa_bytes: Optional[float] = None
    sa_norm: Optional[float] = None
    host_bytes: int
    dummy_bytes: int
    wear: WearStats
    makespan_us: float
    finishes: int
    resets: int
    relaxed_placements: int
    zones_added: int = Field(0, description="Zones the device added to the namespace")


class WearReport(BaseModel):
    strategy: str
    repetitions: int
    runs: List[ZenfsReport]
    wear: WearStats
