"""
Zoned device: the zone command set (WRITE, APPEND, READ, FINISH, RESET) on top
of the allocator and the flash model.

Logical page p of a zone lives in group p // group_pages; inside the group,
lane (p mod group_pages) mod L holds it at in-lane index
(p mod group_pages) div L, filling the lane's blocks one after the other.
"""

from __future__ import annotations

import logging
from typing import Optional

from api.allocator.schemas import AllocationRequest, AllocationResult
from api.allocator.services import Allocator, allocate
from api.common.errors import (
    InvalidRequest, OpenZoneLimitExceeded, ReadBeyondWritePointer, ReadUnmappedZone,
    WritePointerViolation, ZoneFull,
)
from api.common.utils import ceil_div
from api.flash.schemas import Availability, ElementEvent, Issuer, Receipt, ReceiptKind
from api.flash.services import FlashState, program_page, read_page
from api.geometry.schemas import DeviceGeometry, StrategyConfig
from api.geometry.services import group_pages, lane_width
from api.metrics.schemas import MetricsLedger
from api.zones.schemas import (
    FinishReport, Lane, MappingTable, ResetReport, ZoneDescriptor, ZoneState,
)
from api.zones.trace import TraceRecorder

logger = logging.getLogger(__name__)


class ZonedDevice:
    """
    One simulated ZNS device under one mapping strategy.

    ``now`` is the virtual time stamped on trace records; the simulator sets it
    before executing each command.
    """

    def __init__(self, geometry: DeviceGeometry, strategy: StrategyConfig, *,
                 allocator: Allocator = allocate,
                 trace: Optional[TraceRecorder] = None,
                 ledger: Optional[MetricsLedger] = None):
        self.geometry = geometry
        self.strategy = strategy
        self.allocator = allocator
        self.flash = FlashState(geometry, strategy)
        self.mapping = MappingTable()
        self.zones = [ZoneDescriptor(zone_id=z) for z in range(geometry.zones_total)]
        self.open_zones: set[int] = set()
        self.ledger = ledger if ledger is not None else MetricsLedger()
        self.trace = trace if trace is not None else TraceRecorder.discard()
        self.now = 0.0
        self.lane_width = lane_width(strategy, geometry)
        self.group_pages = group_pages(strategy, geometry)
        self.zone_pages = geometry.zone_pages

    # Lookup helpers

    def zone(self, zone_id: int) -> ZoneDescriptor:
        if not 0 <= zone_id < len(self.zones):
            raise InvalidRequest(f"Zone {zone_id} does not exist", zone=zone_id)
        return self.zones[zone_id]

    def zone_of_lba(self, lba: int) -> tuple[int, int]:
        """Split a device LBA (in pages) into (zone id, offset in zone)."""
        return divmod(lba, self.zone_pages)

    def occupancy(self, zone_id: int) -> float:
        """Fraction of the zone below the write pointer."""
        return self.zone(zone_id).write_pointer / self.zone_pages

    def _locate(self, zone: ZoneDescriptor, page: int) -> tuple[Optional[Lane], int, int]:
        group, offset = divmod(page, self.group_pages)
        luns = self.geometry.luns_total
        in_lane = offset // luns
        block, block_page = divmod(in_lane, self.geometry.pages_per_block)
        lane = zone.mapping[group][offset % luns]
        if lane is None:
            return None, block, block_page
        return lane, lane.offset + block, block_page

    def _lanes(self, result: AllocationResult) -> list[list[Optional[Lane]]]:
        luns = self.geometry.luns_total
        groups: list[list[Optional[Lane]]] = []
        for group in result.group_order:
            if len(group) == luns:
                groups.append([Lane(eid, 0, self.flash[eid].block_luns[0]) for eid in group])
            else:
                (eid,) = group
                groups.append([Lane(eid, lane * self.lane_width, lane) for lane in range(luns)])
        return groups

    # Commands

    def _open(self, zone: ZoneDescriptor) -> list[Receipt]:
        if len(self.open_zones) >= self.geometry.max_open_zones:
            raise OpenZoneLimitExceeded(
                f"Cannot open zone {zone.zone_id}: {len(self.open_zones)} zones already open",
                zone=zone.zone_id, open_zones=sorted(self.open_zones),
            )
        result = self.allocator(AllocationRequest(zone.zone_id, self.strategy, self.flash))
        receipts: list[Receipt] = []
        if self.geometry.t_alloc > 0:
            receipts.append(Receipt(kind=ReceiptKind.ALLOC_DELAY, lun=None,
                                    duration=self.geometry.t_alloc, issuer=Issuer.DEVICE))
        for eid in result.element_ids:
            erases = self.flash.claim(eid)
            if erases:
                self.ledger.erase_counts[eid] += 1
                self.trace.emit(self.now, "erase", element=eid, lun=self.flash[eid].lun,
                                blocks=len(erases))
            receipts.extend(erases)
        self.mapping.bind(zone.zone_id, result)
        zone.mapping = self._lanes(result)
        zone.state = ZoneState.OPEN
        self.open_zones.add(zone.zone_id)
        self.trace.emit(self.now, "alloc", zone=zone.zone_id, elements=list(result.element_ids),
                        objective=result.objective_value, candidates=result.candidates,
                        relaxed=result.relaxed or None)
        logger.debug("Zone %d mapped to %d element(s), objective %d",
                     zone.zone_id, len(result.element_ids), result.objective_value)
        return receipts

    def zone_write(self, zone_id: int, start_lba: int, page_count: int, *,
                   kind: str = "write") -> list[Receipt]:
        """
        Write pages at the write pointer, allocating the zone on first write.

        Args:
            zone_id: Target zone
            start_lba: Page offset in the zone; must equal the write pointer
            page_count: Number of pages, at least 1

        Returns:
            list[Receipt]: Allocation delay and erase receipts (first write of a
            reused element only) followed by one program receipt per page

        Raises:
            ZoneFull: If the zone is Full or the write crosses its end
            WritePointerViolation: If start_lba is not the write pointer
            OpenZoneLimitExceeded: If an Empty zone cannot be opened
            InsufficientAvailability: If the allocator cannot back the zone
        """
        zone = self.zone(zone_id)
        if page_count < 1:
            raise InvalidRequest("page_count must be at least 1", zone=zone_id)
        if zone.state is ZoneState.FULL:
            raise ZoneFull(f"Zone {zone_id} is full", zone=zone_id)
        if start_lba != zone.write_pointer:
            raise WritePointerViolation(
                f"Write at {start_lba} but zone {zone_id} write pointer is {zone.write_pointer}",
                zone=zone_id, lba=start_lba, write_pointer=zone.write_pointer,
            )
        if start_lba + page_count > self.zone_pages:
            raise ZoneFull(
                f"Write of {page_count} pages at {start_lba} crosses the end of zone {zone_id}",
                zone=zone_id, lba=start_lba, pages=page_count,
            )

        receipts: list[Receipt] = []
        if zone.state is ZoneState.EMPTY:
            receipts.extend(self._open(zone))
        for page in range(start_lba, start_lba + page_count):
            lane, block, block_page = self._locate(zone, page)
            receipts.append(program_page(self.flash[lane.element], block, block_page, self.geometry))
        zone.write_pointer += page_count
        self.ledger.host_pages += page_count
        self.trace.emit(self.now, kind, zone=zone_id, lba=start_lba, pages=page_count)
        if zone.write_pointer == self.zone_pages:
            zone.state = ZoneState.FULL
            self.open_zones.discard(zone_id)
        return receipts

    def zone_append(self, zone_id: int, page_count: int) -> tuple[int, list[Receipt]]:
        """
        Write at the current write pointer and report where the data landed.

        Returns:
            tuple: (assigned start LBA, receipts)
        """
        zone = self.zone(zone_id)
        if zone.state is ZoneState.FULL:
            raise ZoneFull(f"Zone {zone_id} is full", zone=zone_id)
        start = zone.write_pointer
        return start, self.zone_write(zone_id, start, page_count, kind="append")

    def zone_read(self, zone_id: int, start_lba: int, page_count: int) -> list[Receipt]:
        """
        Read pages below the write pointer.

        Pages in lanes released by FINISH read back as zeros without touching flash.

        Raises:
            ReadBeyondWritePointer: If the range reaches the write pointer
            ReadUnmappedZone: If the zone has no mapping (finished while empty)
        """
        zone = self.zone(zone_id)
        if page_count < 1 or start_lba < 0:
            raise InvalidRequest("Invalid read range", zone=zone_id, lba=start_lba, pages=page_count)
        if start_lba + page_count > zone.write_pointer:
            raise ReadBeyondWritePointer(
                f"Read of {page_count} pages at {start_lba} passes write pointer {zone.write_pointer}",
                zone=zone_id, lba=start_lba, pages=page_count, write_pointer=zone.write_pointer,
            )
        if not zone.is_mapped:
            raise ReadUnmappedZone(f"Zone {zone_id} has no storage elements", zone=zone_id)

        receipts = []
        for page in range(start_lba, start_lba + page_count):
            lane, block, block_page = self._locate(zone, page)
            if lane is not None:
                receipts.append(read_page(self.flash[lane.element], block, block_page, self.geometry))
        self.trace.emit(self.now, "read", zone=zone_id, lba=start_lba, pages=page_count)
        return receipts

    def finish_zone(self, zone_id: int) -> FinishReport:
        """
        Seal a zone as Full.

        Flexible strategies dummy-fill the written lanes of the partially
        written group up to the group end and release every element that never
        received data. Baselines dummy-fill the whole remaining zone.
        Finishing a Full zone is a no-op; finishing an Empty zone only marks it Full.

        Returns:
            FinishReport: Dummy pages, released elements and the dummy program receipts
        """
        zone = self.zone(zone_id)
        if zone.state is ZoneState.FULL:
            return FinishReport(0, 0)
        if zone.state is ZoneState.EMPTY:
            zone.state = ZoneState.FULL
            zone.write_pointer = self.zone_pages
            self.trace.emit(self.now, "finish", zone=zone_id, pages=0, released=0)
            return FinishReport(0, 0)

        write_pointer = zone.write_pointer
        if self.strategy.kind.is_baseline:
            end = self.zone_pages
        else:
            end = ceil_div(write_pointer, self.group_pages) * self.group_pages

        receipts: list[Receipt] = []
        filled: dict[int, int] = {}
        for page in range(write_pointer, end):
            lane, block, block_page = self._locate(zone, page)
            element = self.flash[lane.element]
            if element.avail is not Availability.ALLOCATED_VALID:
                continue
            receipts.append(program_page(element, block, block_page, self.geometry, Issuer.DEVICE))
            filled[element.id] = filled.get(element.id, 0) + 1

        released: set[int] = set()
        for eid in self.mapping.elements_of(zone_id):
            if self.flash[eid].avail is Availability.ALLOCATED_EMPTY:
                self.flash.transition(eid, ElementEvent.FINISH_RELEASE)
                self.mapping.release(zone_id, eid)
                released.add(eid)
        if released:
            for group in zone.mapping:
                for index, lane in enumerate(group):
                    if lane is not None and lane.element in released:
                        group[index] = None

        self.ledger.device_pages += len(receipts)
        for eid, pages in filled.items():
            self.trace.emit(self.now, "dummy", zone=zone_id, element=eid, pages=pages)
        self.trace.emit(self.now, "finish", zone=zone_id, lba=write_pointer,
                        pages=len(receipts), released=len(released))
        zone.write_pointer = self.zone_pages
        zone.state = ZoneState.FULL
        self.open_zones.discard(zone_id)
        logger.debug("Finished zone %d at %d/%d: %d dummy pages, %d elements released",
                     zone_id, write_pointer, self.zone_pages, len(receipts), len(released))
        return FinishReport(len(receipts), len(released), tuple(receipts))

    def reset_zone(self, zone_id: int) -> ResetReport:
        """
        Rewind a zone to Empty. Written elements become FreeInvalid and are
        erased only when reallocated; unwritten ones become Free.
        """
        zone = self.zone(zone_id)
        if zone.state is ZoneState.EMPTY:
            return ResetReport(0, 0)
        invalidated = released = 0
        for eid in self.mapping.elements_of(zone_id):
            if self.flash[eid].avail is Availability.ALLOCATED_VALID:
                self.flash.transition(eid, ElementEvent.RESET_INVALIDATE)
                invalidated += 1
            else:
                self.flash.transition(eid, ElementEvent.RESET_RELEASE)
                released += 1
        self.mapping.unbind(zone_id)
        zone.mapping = []
        zone.write_pointer = 0
        zone.state = ZoneState.EMPTY
        self.open_zones.discard(zone_id)
        self.trace.emit(self.now, "reset", zone=zone_id, invalidated=invalidated, released=released)
        return ResetReport(invalidated, released)

    def add_zone(self) -> int:
        """
        Extend the namespace with one Empty zone built from the free elements.

        Only succeeds when the allocator could back the new zone right now;
        nothing is claimed until its first write. Flexible strategies can grow
        while FINISH leaves elements unused. Baselines grow only onto spare
        physical zones.

        Returns:
            int: Id of the new zone

        Raises:
            InsufficientAvailability: If too few elements are available
            NoFreePhysicalZone: If no physical zone can back another zone
        """
        zone_id = len(self.zones)
        self.allocator(AllocationRequest(zone_id, self.strategy, self.flash))
        self.zones.append(ZoneDescriptor(zone_id=zone_id))
        self.trace.emit(self.now, "grow", zone=zone_id)
        logger.debug("Namespace extended to %d zones", len(self.zones))
        return zone_id

    # Consistency

    def check_invariants(self) -> list[str]:
        """
        Check the device-wide invariants.

        Returns:
            list[str]: Human readable violations, empty when consistent
        """
        problems: list[str] = []
        counts = self.flash.counts()
        if sum(counts.values()) != len(self.flash):
            problems.append(f"availability counts {dict(counts)} do not add up to N={len(self.flash)}")

        for element in self.flash:
            owner = self.mapping.zone_of(element.id)
            if element.avail in (Availability.FREE, Availability.ALLOCATED_EMPTY) and element.pages_written:
                problems.append(f"element {element.id} in state {int(element.avail)} holds programmed pages")
            if element.avail in (Availability.ALLOCATED_EMPTY, Availability.ALLOCATED_VALID) and owner is None:
                problems.append(f"allocated element {element.id} is not mapped")
            if element.is_available and owner is not None:
                problems.append(f"free element {element.id} is still mapped to zone {owner}")
        problems.extend(self.mapping.problems())

        open_states = {z.zone_id for z in self.zones if z.state is ZoneState.OPEN}
        if open_states != self.open_zones:
            problems.append(f"open zone set {sorted(self.open_zones)} disagrees with states {sorted(open_states)}")
        if len(open_states) > self.geometry.max_open_zones:
            problems.append(f"{len(open_states)} zones open, limit {self.geometry.max_open_zones}")

        full_block = self.geometry.pages_per_block
        for zone in self.zones:
            if zone.state is ZoneState.EMPTY and (zone.write_pointer or zone.is_mapped):
                problems.append(f"empty zone {zone.zone_id} has wp={zone.write_pointer} or a mapping")
            if (zone.state is ZoneState.FULL) != (zone.write_pointer == self.zone_pages):
                problems.append(f"zone {zone.zone_id} state {zone.state.value} with wp={zone.write_pointer}")
            if zone.state is ZoneState.FULL:
                for eid in self.mapping.elements_of(zone.zone_id):
                    if any(pages != full_block for pages in self.flash[eid].programmed_pages):
                        problems.append(f"full zone {zone.zone_id} maps partially programmed element {eid}")

        wear_total = sum(element.wear for element in self.flash)
        if wear_total != self.flash.erase_events:
            problems.append(f"wear sum {wear_total} differs from {self.flash.erase_events} element erases")
        return problems
