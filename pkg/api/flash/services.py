"""
Flash model: availability state machine, page programming, element erase and
the device-wide FlashState that owns every storage element.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Iterator

from api.common.errors import (
    BlockFull, EraseValidData, IllegalTransition, ProgramOnUnallocated, ProgramOrderViolation,
)
from api.common.schemas import StrategyKind
from api.flash.schemas import (
    Availability, ElementEvent, Issuer, Receipt, ReceiptKind, StorageElement,
)
from api.geometry.schemas import DeviceGeometry, StrategyConfig

logger = logging.getLogger(__name__)

A = Availability
EV = ElementEvent

LEGAL_TRANSITIONS: dict[tuple[Availability, ElementEvent], Availability] = {
    (A.FREE, EV.ALLOCATE): A.ALLOCATED_EMPTY,
    (A.FREE_INVALID, EV.ALLOCATE): A.ALLOCATED_EMPTY,
    (A.ALLOCATED_EMPTY, EV.FIRST_PROGRAM): A.ALLOCATED_VALID,
    (A.ALLOCATED_EMPTY, EV.FINISH_RELEASE): A.FREE,
    (A.ALLOCATED_EMPTY, EV.RESET_RELEASE): A.FREE,
    (A.ALLOCATED_VALID, EV.RESET_INVALIDATE): A.FREE_INVALID,
    (A.FREE_INVALID, EV.ERASE_COMPLETE): A.FREE,
}


def _wipe(element: StorageElement) -> None:
    element.programmed_pages = [0] * len(element.block_ids)
    element.wear += 1


def element_transition(element: StorageElement, event: ElementEvent) -> StorageElement:
    """
    Apply one availability event to an element.

    Allocating a FreeInvalid element erases it on the spot (wear + 1, member
    blocks emptied); callers that need the erase timed use
    ``FlashState.claim``, which issues the erase receipts first.

    Args:
        element: The element to update in place
        event: The event to apply

    Returns:
        StorageElement: The same element, updated

    Raises:
        IllegalTransition: If the (state, event) pair is not a legal edge
    """
    target = LEGAL_TRANSITIONS.get((element.avail, event))
    if target is None:
        raise IllegalTransition(
            f"Illegal transition {element.avail.name} --{event.value}--> for element {element.id}",
            element=element.id, state=int(element.avail), event=event.value,
        )
    if event in (EV.ALLOCATE, EV.ERASE_COMPLETE) and element.avail is A.FREE_INVALID:
        _wipe(element)
    element.avail = target
    return element


def program_page(element: StorageElement, block_index: int, page_index: int,
                 geometry: DeviceGeometry, issuer: Issuer = Issuer.HOST) -> Receipt:
    """
    Program one page of one member block.

    Args:
        element: Target element, allocated
        block_index: Index of the block inside ``element.block_ids``
        page_index: Page inside the block; must equal the block's programmed count
        geometry: Device geometry for P and t_prog
        issuer: HOST for host data, DEVICE for dummy pages

    Returns:
        Receipt: Program receipt on the block's LUN

    Raises:
        ProgramOnUnallocated: If the element is Free or FreeInvalid
        BlockFull: If the block already holds P pages
        ProgramOrderViolation: If the page is not the next one in the block
    """
    if element.avail not in (A.ALLOCATED_EMPTY, A.ALLOCATED_VALID):
        raise ProgramOnUnallocated(
            f"Element {element.id} is not allocated (a={int(element.avail)})",
            element=element.id, state=int(element.avail),
        )
    written = element.programmed_pages[block_index]
    if written >= geometry.pages_per_block or page_index >= geometry.pages_per_block:
        raise BlockFull(
            f"Block {element.block_ids[block_index]} has no page {page_index}",
            element=element.id, block=element.block_ids[block_index], page=page_index,
        )
    if page_index != written:
        raise ProgramOrderViolation(
            f"Block {element.block_ids[block_index]} expects page {written}, got {page_index}",
            element=element.id, block=element.block_ids[block_index],
            expected=written, page=page_index,
        )
    if element.avail is A.ALLOCATED_EMPTY:
        element_transition(element, EV.FIRST_PROGRAM)
    element.programmed_pages[block_index] = written + 1
    return Receipt(
        kind=ReceiptKind.PROGRAM,
        lun=element.block_luns[block_index],
        duration=geometry.t_prog + geometry.t_xfer,
        issuer=issuer,
        element=element.id,
        block=element.block_ids[block_index],
        page=page_index,
    )


def read_page(element: StorageElement, block_index: int, page_index: int,
              geometry: DeviceGeometry) -> Receipt:
    """Read receipt for one programmed page."""
    return Receipt(
        kind=ReceiptKind.READ,
        lun=element.block_luns[block_index],
        duration=geometry.t_read + geometry.t_xfer,
        element=element.id,
        block=element.block_ids[block_index],
        page=page_index,
    )


def erase_element(element: StorageElement, geometry: DeviceGeometry) -> list[Receipt]:
    """
    Physically erase an invalid element before it is reused.

    Args:
        element: Element in state FreeInvalid
        geometry: Device geometry for t_erase

    Returns:
        list[Receipt]: One erase receipt per member block, on that block's LUN

    Raises:
        EraseValidData: If the element still holds valid data
        IllegalTransition: If the element is in any other non-invalid state
    """
    if element.avail is A.ALLOCATED_VALID:
        raise EraseValidData(f"Refusing to erase valid element {element.id}", element=element.id)
    element_transition(element, EV.ERASE_COMPLETE)
    return [
        Receipt(kind=ReceiptKind.ERASE, lun=lun, duration=geometry.t_erase,
                issuer=Issuer.DEVICE, element=element.id, block=block)
        for block, lun in zip(element.block_ids, element.block_luns)
    ]


def build_elements(geometry: DeviceGeometry, strategy: StrategyConfig) -> list[StorageElement]:
    """
    Partition every physical block into storage elements.

    Chunks are numbered LUN-major, stripe n is block n of every LUN, and
    full-zone element z holds blocks z*E..z*E+E-1 of every LUN.
    """
    bpl = geometry.blocks_per_lun
    luns = geometry.luns_total
    elements: list[StorageElement] = []

    if strategy.kind is StrategyKind.CHUNK:
        c_s = strategy.chunk_size
        per_lun = bpl // c_s
        for lun in range(luns):
            for k in range(per_lun):
                blocks = tuple(lun * bpl + k * c_s + i for i in range(c_s))
                elements.append(StorageElement(
                    id=lun * per_lun + k, lun=lun, block_ids=blocks, block_luns=(lun,) * c_s,
                ))
    elif strategy.kind is StrategyKind.STRIPE:
        for b in range(bpl):
            elements.append(StorageElement(
                id=b, lun=None,
                block_ids=tuple(lun * bpl + b for lun in range(luns)),
                block_luns=tuple(range(luns)),
            ))
    else:
        e = geometry.blocks_per_lun_per_zone
        for z in range(geometry.physical_zones):
            blocks = tuple(lun * bpl + z * e + i for lun in range(luns) for i in range(e))
            elements.append(StorageElement(
                id=z, lun=None, block_ids=blocks,
                block_luns=tuple(lun for lun in range(luns) for _ in range(e)),
            ))
    return elements


class FlashState:
    """
    Every storage element of one device under one strategy.

    Also keeps the order in which elements became available again, which the
    lazy baseline uses as its FIFO free list.
    """

    def __init__(self, geometry: DeviceGeometry, strategy: StrategyConfig):
        self.geometry = geometry
        self.strategy = strategy
        self.elements = build_elements(geometry, strategy)
        self.release_stamps = [element.id for element in self.elements]
        self._next_stamp = len(self.elements)
        self.erase_events = 0

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[StorageElement]:
        return iter(self.elements)

    def __getitem__(self, element_id: int) -> StorageElement:
        return self.elements[element_id]

    def transition(self, element_id: int, event: ElementEvent) -> StorageElement:
        """Apply an event and record releases for the FIFO free list."""
        element = element_transition(self.elements[element_id], event)
        if event in (EV.FINISH_RELEASE, EV.RESET_RELEASE, EV.RESET_INVALIDATE):
            self.release_stamps[element_id] = self._next_stamp
            self._next_stamp += 1
        return element

    def claim(self, element_id: int) -> list[Receipt]:
        """
        Allocate an element to a zone.

        Returns:
            list[Receipt]: Erase receipts when the element held invalid data
        """
        element = self.elements[element_id]
        receipts: list[Receipt] = []
        if element.avail is A.FREE_INVALID:
            receipts = erase_element(element, self.geometry)
            self.erase_events += 1
        element_transition(element, EV.ALLOCATE)
        return receipts

    def counts(self) -> Counter:
        """Number of elements per availability state."""
        return Counter(element.avail for element in self.elements)

    def block_wear(self) -> list[int]:
        """Erase count of every physical block, indexed by block id."""
        wear = [0] * self.geometry.total_blocks
        for element in self.elements:
            for block in element.block_ids:
                wear[block] = element.wear
        return wear

    def snapshot(self) -> list[dict]:
        """State dump, one record per element."""
        return [element.to_record() for element in self.elements]
