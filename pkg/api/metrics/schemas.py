"""
Metric ledger and report models.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from pydantic import BaseModel, Field


@dataclass
class MetricsLedger:
    """
    Counters owned by one simulated device.

    ``invalidated_series`` holds (timestamp, W_i bytes) points; the value of a
    point holds until the next one. ``erase_counts`` maps element ids to the
    erases seen by this ledger; ``throughput_samples`` holds (window start,
    pages/s) points of the last timed host run.
    """
    host_pages: int = 0
    device_pages: int = 0
    invalid_bytes: int = 0
    invalidated_series: list[tuple[float, int]] = field(default_factory=list)
    erase_counts: Counter = field(default_factory=Counter)
    throughput_samples: list[tuple[float, float]] = field(default_factory=list)

    def record_invalidation(self, t: float, delta_bytes: int) -> int:
        """Add (or, for reclamation, subtract) invalidated bytes at time ``t``."""
        self.invalid_bytes += delta_bytes
        if self.invalidated_series and self.invalidated_series[-1][0] == t:
            self.invalidated_series[-1] = (t, self.invalid_bytes)
        else:
            self.invalidated_series.append((t, self.invalid_bytes))
        return self.invalid_bytes


class SpaceAmplification(BaseModel):
    avg_bytes: float
    avg_normalized: float


class WearStats(BaseModel):
    median: float
    stddev: float
    total_erases: int
    histogram: dict[int, int] = Field(..., description="Erase count -> number of blocks")


class MetricsRow(BaseModel):
    """One row of metrics.csv."""
    strategy: str
    workload: str
    finish_threshold: Optional[int] = None
    dlwa: Optional[float] = None
    sa_bytes: Optional[float] = None
    sa_norm: Optional[float] = None
    wear_median: Optional[float] = None
    wear_stddev: Optional[float] = None
    interference: Optional[float] = None
    makespan_us: Optional[float] = None
    run_id: str
    seed: int = 0
    occupancy: Optional[int] = None
    jobs: Optional[int] = None
    pattern: Optional[str] = None
    throughput_pps: Optional[float] = None
    throughput_stddev: Optional[float] = None
    host_bytes: Optional[int] = None
    dummy_bytes: Optional[int] = None
    erase_total: Optional[int] = None
    ops_completed: Optional[int] = None
    outcome: str = "completed"


METRICS_COLUMNS = list(MetricsRow.model_fields)
