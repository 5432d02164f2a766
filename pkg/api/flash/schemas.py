"""
Physical flash state types: storage elements, availability states and the
receipts produced by flash operations.

These objects are mutated on every simulated page program, so they are plain
slotted dataclasses rather than validated models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional


class Availability(IntEnum):
    """Availability a_n of a storage element."""
    FREE = 0
    ALLOCATED_EMPTY = 1
    ALLOCATED_VALID = 2
    FREE_INVALID = 3


class ElementEvent(str, Enum):
    ALLOCATE = "allocate"
    FIRST_PROGRAM = "first_program"
    FINISH_RELEASE = "finish_release"
    RESET_INVALIDATE = "reset_invalidate"
    RESET_RELEASE = "reset_release"
    ERASE_COMPLETE = "erase_complete"


class ReceiptKind(str, Enum):
    PROGRAM = "program"
    READ = "read"
    ERASE = "erase"
    ALLOC_DELAY = "alloc_delay"


class Issuer(str, Enum):
    HOST = "host"
    DEVICE = "device"


@dataclass(slots=True)
class StorageElement:
    """
    Allocatable unit: a chunk of blocks in one LUN, a stripe of one block per
    LUN, or a whole physical zone for the baselines.

    ``lun`` is None when the element spans every LUN.
    """
    id: int
    lun: Optional[int]
    block_ids: tuple[int, ...]
    block_luns: tuple[int, ...]
    wear: int = 0
    avail: Availability = Availability.FREE
    programmed_pages: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.programmed_pages:
            self.programmed_pages = [0] * len(self.block_ids)

    @property
    def is_available(self) -> bool:
        return self.avail in (Availability.FREE, Availability.FREE_INVALID)

    @property
    def pages_written(self) -> int:
        return sum(self.programmed_pages)

    def to_record(self) -> dict:
        """State-dump record for JSONL snapshots."""
        return {
            "id": self.id,
            "lun": self.lun,
            "wear": self.wear,
            "avail": int(self.avail),
            "programmed_pages": list(self.programmed_pages),
        }


@dataclass(frozen=True, slots=True)
class Receipt:
    """
    Timing-free record of one flash operation.

    ``lun`` is None for controller-level work (allocation delay).
    """
    kind: ReceiptKind
    lun: Optional[int]
    duration: float
    issuer: Issuer = Issuer.HOST
    element: Optional[int] = None
    block: Optional[int] = None
    page: Optional[int] = None
