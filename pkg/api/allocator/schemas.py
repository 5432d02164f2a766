"""
Allocation request and result types.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from api.flash.services import FlashState
from api.geometry.schemas import StrategyConfig


@dataclass(frozen=True, slots=True)
class AllocationRequest:
    """A zone's first write asks for Z storage elements from the current flash state."""
    zone_id: int
    strategy: StrategyConfig
    state: FlashState


@dataclass(frozen=True, slots=True)
class AllocationResult:
    """
    Selected elements for one zone.

    ``group_order`` lists the striping groups in LBA order; a group holds one
    element per lane (chunks) or a single element (stripes, full zones).
    ``candidates`` is the number of available elements the solver examined.
    """
    element_ids: tuple[int, ...]
    group_order: tuple[tuple[int, ...], ...]
    objective_value: int
    candidates: int = 0
    relaxed: bool = False
    zone_id: Optional[int] = None
