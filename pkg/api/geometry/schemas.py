"""
Pydantic models for device geometry and mapping strategy configuration.
Both are immutable after validation and shared read-only by every module.
"""

from __future__ import annotations

import re
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from api.common.schemas import StrategyKind
from api.common.utils import parse_size
from api.geometry.constants import DEFAULT_T_PROG, DEFAULT_T_READ, DEFAULT_T_ERASE

_CHUNK_LABEL = re.compile(r"^chunk-(\d+)$")


class DeviceGeometry(BaseModel):
    """
    Validated physical layout of a zoned device plus its latency model.
    Build instances through ``validate_geometry`` so derived fields are checked.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: int = Field(..., gt=0, description="Flash channels")
    luns_per_channel: int = Field(1, gt=0, description="LUNs attached to each channel")
    luns_total: int = Field(..., gt=0, description="Parallel units L")
    pages_per_block: int = Field(..., gt=0, description="Pages per erase block P")
    page_size: int = Field(..., gt=0, description="Page size in bytes")
    blocks_per_zone: int = Field(..., gt=0, description="Erase blocks backing one zone")
    blocks_per_lun_per_zone: int = Field(..., gt=0, description="Blocks each LUN contributes to a zone (E)")
    blocks_per_lun: int = Field(..., gt=0, description="Physical erase blocks in each LUN")
    zones_total: int = Field(..., gt=0, description="Logical zones exposed to the host")
    max_open_zones: int = Field(..., gt=0, description="Open zone limit")
    t_prog: float = Field(DEFAULT_T_PROG, gt=0, description="Page program latency in microseconds")
    t_read: float = Field(DEFAULT_T_READ, gt=0, description="Page read latency in microseconds")
    t_erase: float = Field(DEFAULT_T_ERASE, gt=0, description="Block erase latency in microseconds")
    t_alloc: float = Field(0.0, ge=0, description="Synthetic zone allocation delay in microseconds")
    t_xfer: float = Field(0.0, ge=0, description="Per-page channel transfer time in microseconds")

    @field_validator('page_size', mode='before')
    @classmethod
    def parse_page_size(cls, value):
        """Accept sizes such as '16KiB'."""
        return parse_size(value)

    @property
    def zone_pages(self) -> int:
        return self.blocks_per_zone * self.pages_per_block

    @property
    def zone_bytes(self) -> int:
        return self.zone_pages * self.page_size

    @property
    def total_blocks(self) -> int:
        return self.luns_total * self.blocks_per_lun

    @property
    def physical_zones(self) -> int:
        return self.blocks_per_lun // self.blocks_per_lun_per_zone

    @property
    def capacity_bytes(self) -> int:
        """Host-visible capacity: all logical zones."""
        return self.zones_total * self.zone_bytes

    def lun_of_block(self, block_id: int) -> int:
        return block_id // self.blocks_per_lun


class StrategyConfig(BaseModel):
    """
    Zone mapping strategy.

    ``chunk_size`` is the number of blocks per chunk and only applies to
    ``chunk``; ``parallelism_relaxed`` lets chunk allocation ignore the
    per-LUN quota when it cannot be met.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: StrategyKind
    chunk_size: Optional[int] = Field(None, description="Blocks per chunk (c_s)")
    parallelism_relaxed: bool = False

    @property
    def label(self) -> str:
        """Short name used in reports, e.g. ``chunk-2``."""
        if self.kind is StrategyKind.CHUNK:
            return f"chunk-{self.chunk_size}"
        return self.kind.value

    @classmethod
    def from_label(cls, label: str, parallelism_relaxed: bool = False) -> 'StrategyConfig':
        """
        Build a strategy from its report label.

        Args:
            label: ``direct``, ``lazy``, ``stripe`` or ``chunk-<c_s>``
            parallelism_relaxed: Relaxed chunk parallelism flag

        Returns:
            StrategyConfig: The unvalidated strategy
        """
        match = _CHUNK_LABEL.match(label)
        if match:
            return cls(kind=StrategyKind.CHUNK, chunk_size=int(match.group(1)),
                       parallelism_relaxed=parallelism_relaxed)
        return cls(kind=StrategyKind(label), parallelism_relaxed=parallelism_relaxed)
