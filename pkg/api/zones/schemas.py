"""
Zone descriptors, lanes, the zone-to-element mapping table and command reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from api.allocator.schemas import AllocationResult
from api.common.errors import InvariantViolation
from api.flash.schemas import Receipt


class ZoneState(str, Enum):
    EMPTY = "empty"
    OPEN = "open"
    FULL = "full"


@dataclass(frozen=True, slots=True)
class Lane:
    """
    One of the L lanes of a striping group: ``width`` blocks of ``element``
    starting at member-block index ``offset``, all on ``lun``.
    """
    element: int
    offset: int
    lun: int


@dataclass(slots=True)
class ZoneDescriptor:
    """
    Logical zone state. ``mapping`` holds the striping groups in LBA order;
    lanes released by FINISH are replaced with None.
    """
    zone_id: int
    state: ZoneState = ZoneState.EMPTY
    write_pointer: int = 0
    mapping: list[list[Optional[Lane]]] = field(default_factory=list)

    @property
    def is_mapped(self) -> bool:
        return bool(self.mapping)


@dataclass(frozen=True, slots=True)
class FinishReport:
    dummy_pages_written: int
    elements_released: int
    receipts: tuple[Receipt, ...] = ()


@dataclass(frozen=True, slots=True)
class ResetReport:
    elements_invalidated: int
    elements_released: int


class MappingTable:
    """
    zone -> allocation and element -> zone, kept bijective on mapped pairs.
    """

    def __init__(self):
        self.results: dict[int, AllocationResult] = {}
        self.members: dict[int, list[int]] = {}
        self.owner: dict[int, int] = {}

    def bind(self, zone_id: int, result: AllocationResult) -> None:
        if zone_id in self.members:
            raise InvariantViolation(f"Zone {zone_id} is already mapped", zone=zone_id)
        taken = [eid for eid in result.element_ids if eid in self.owner]
        if taken:
            raise InvariantViolation(f"Elements {taken} already belong to other zones",
                                     zone=zone_id, elements=taken)
        self.results[zone_id] = result
        self.members[zone_id] = list(result.element_ids)
        for eid in result.element_ids:
            self.owner[eid] = zone_id

    def release(self, zone_id: int, element_id: int) -> None:
        if self.owner.get(element_id) != zone_id:
            raise InvariantViolation(f"Element {element_id} is not mapped to zone {zone_id}",
                                     zone=zone_id, element=element_id)
        del self.owner[element_id]
        self.members[zone_id].remove(element_id)

    def unbind(self, zone_id: int) -> list[int]:
        self.results.pop(zone_id, None)
        elements = self.members.pop(zone_id, [])
        for eid in elements:
            del self.owner[eid]
        return elements

    def elements_of(self, zone_id: int) -> list[int]:
        return list(self.members.get(zone_id, ()))

    def zone_of(self, element_id: int) -> Optional[int]:
        return self.owner.get(element_id)

    def problems(self) -> list[str]:
        """Bijectivity violations, empty when consistent."""
        found = []
        seen: dict[int, int] = {}
        for zone_id, elements in self.members.items():
            for eid in elements:
                if eid in seen:
                    found.append(f"element {eid} mapped by zones {seen[eid]} and {zone_id}")
                seen[eid] = zone_id
                if self.owner.get(eid) != zone_id:
                    found.append(f"reverse index of element {eid} is {self.owner.get(eid)}, expected {zone_id}")
        if len(seen) != len(self.owner):
            found.append("reverse index holds elements no zone maps")
        return found
