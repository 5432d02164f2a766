"""
ZenFS-lite: a file-level host model placing key-value data into zones by
write-lifetime hint.

Inserts and updates append to the active file of a lifetime class; files are
sealed at a jittered size and die at seal time plus a jittered lifetime.
Deletes and updates also invalidate the oldest live pages of their class.
A zone is reset as soon as it is no longer open and holds no valid data.

Placement for a class: its own open zone; else a new zone while below the
active-zone budget; else FINISH the fullest open zone whose occupancy meets
the threshold and take a new zone; else append to the open zone of the
nearest lifetime class. No place at all is OutOfSpace.

A new zone is the first Empty one. With flexible zones and none Empty, the
device is asked for an extra zone; a device that cannot back one ends the
run with OutOfSpace even if an open zone could still take the data.
"""

from __future__ import annotations

import heapq
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from api.common.errors import (
    DirectZoneBusy, InsufficientAvailability, NoFreePhysicalZone, OutOfSpace,
)
from api.engine.schemas import Command, JobCommands
from api.workloads.schemas import KvMixSpec, ZenfsLiteConfig
from api.zones.schemas import ZoneState

logger = logging.getLogger(__name__)

LIFETIME_JITTER = 0.5


@dataclass(slots=True)
class Extent:
    zone: int
    start: int
    pages: int


@dataclass(slots=True)
class HostFile:
    file_id: int
    lifetime_class: int
    target_pages: int
    extents: deque = field(default_factory=deque)
    written: int = 0
    live_pages: int = 0
    death_op: Optional[int] = None


class ZenfsLite:
    """
    Host model state for one run on one device.

    ``commands()`` is a synchronous issuer for ``Simulator.run_jobs``.
    """

    def __init__(self, device, kv: KvMixSpec, zf: ZenfsLiteConfig):
        self.device = device
        self.kv = kv
        self.zf = zf
        self.classes = zf.lifetime_classes
        self.weights = [lifetime.weight for lifetime in self.classes]
        self.op_rng = random.Random(kv.rng_seed)
        self.file_rng = random.Random(zf.rng_seed * 7919 + kv.rng_seed)
        self.page_size = device.geometry.page_size
        self.zone_pages = device.geometry.zone_pages
        self.max_active = min(zf.max_active_zones, device.geometry.max_open_zones)

        zones = len(device.zones)
        self.zone_class: dict[int, int] = {}
        self.zone_valid = [0] * zones
        self.zone_invalid = [0] * zones
        self.active: dict[int, HostFile] = {}
        self.live: list[deque] = [deque() for _ in self.classes]
        self.deaths: list[tuple[int, int]] = []
        self.files: dict[int, HostFile] = {}
        self._next_file = 0
        self._reclaimable: set[int] = set()

        self.op = 0
        self.ops_completed = 0
        self.finishes = 0
        self.resets = 0
        self.relaxed = 0
        self.grown = 0

    # Host-side invalidation accounting

    def _invalidate(self, zone_id: int, pages: int) -> None:
        self.zone_valid[zone_id] -= pages
        self.zone_invalid[zone_id] += pages
        self._reclaimable.add(zone_id)
        delta = pages * self.page_size
        total = self.device.ledger.record_invalidation(self.op, delta)
        self.device.trace.emit(self.op, "invalidate", zone=zone_id, pages=pages, bytes=delta, wi=total)

    def _drop_pages(self, host_file: HostFile, pages: int) -> int:
        dropped = 0
        while pages and host_file.extents:
            extent = host_file.extents[0]
            take = min(pages, extent.pages)
            self._invalidate(extent.zone, take)
            extent.start += take
            extent.pages -= take
            if not extent.pages:
                host_file.extents.popleft()
            pages -= take
            dropped += take
        host_file.live_pages -= dropped
        return dropped

    def _expire(self) -> None:
        while self.deaths and self.deaths[0][0] <= self.op:
            _, file_id = heapq.heappop(self.deaths)
            host_file = self.files.pop(file_id, None)
            if host_file is not None and host_file.live_pages:
                self._drop_pages(host_file, host_file.live_pages)

    def _invalidate_oldest(self, lifetime_class: int, pages: int) -> None:
        queue = self.live[lifetime_class]
        while pages and queue:
            host_file = queue[0]
            if host_file.file_id not in self.files or not host_file.live_pages:
                queue.popleft()
                continue
            pages -= self._drop_pages(host_file, pages)
            if not host_file.live_pages:
                queue.popleft()
                self.files.pop(host_file.file_id, None)

    def _mark_series(self, t: int) -> None:
        total = self.device.ledger.record_invalidation(t, 0)
        self.device.trace.emit(t, "invalidate", pages=0, bytes=0, wi=total)

    def close_series(self) -> None:
        """Pin the W_i series to the last completed operation."""
        self._mark_series(self.ops_completed)

    # Zone management

    def _empty_zone(self) -> Optional[int]:
        for zone in self.device.zones:
            if zone.state is ZoneState.EMPTY and zone.zone_id not in self.zone_class:
                return zone.zone_id
        return None

    def _reset(self, zone_id: int) -> Command:
        def action():
            self.device.reset_zone(zone_id)
            return []
        return Command("reset", zone_id, 0, action)

    def _finish(self, zone_id: int) -> Command:
        def action():
            return self.device.finish_zone(zone_id).receipts
        return Command("finish", zone_id, 0, action)

    def _reclaim(self) -> JobCommands:
        for zone_id in sorted(self._reclaimable):
            zone = self.device.zones[zone_id]
            if zone.state is not ZoneState.FULL or self.zone_valid[zone_id]:
                continue
            yield self._reset(zone_id)
            self.resets += 1
            freed = self.zone_invalid[zone_id]
            self.zone_invalid[zone_id] = 0
            if freed:
                delta = -freed * self.page_size
                total = self.device.ledger.record_invalidation(self.op, delta)
                self.device.trace.emit(self.op, "invalidate", zone=zone_id, pages=-freed,
                                       bytes=delta, wi=total)
        self._reclaimable = {
            zone_id for zone_id in self._reclaimable if self.zone_invalid[zone_id]
        }

    def _grow(self, lifetime_class: int) -> Optional[int]:
        if not self.zf.flexible_zones:
            return None
        try:
            zone_id = self.device.add_zone()
        except (DirectZoneBusy, InsufficientAvailability, NoFreePhysicalZone) as e:
            raise OutOfSpace(
                f"No zone left to open at operation {self.op}: {e.detail}",
                op=self.op, lifetime_class=self.classes[lifetime_class].name,
                zones=len(self.device.zones),
            ) from e
        self.zone_valid.append(0)
        self.zone_invalid.append(0)
        self.grown += 1
        return zone_id

    def _finish_victim(self) -> Optional[int]:
        threshold = self.zf.finish_threshold
        if threshold == 0:
            return None
        needed = (100 - threshold) * self.zone_pages
        eligible = [
            zone_id for zone_id in self.zone_class
            if self.device.zones[zone_id].write_pointer * 100 >= needed
        ]
        if not eligible:
            return None
        return max(eligible, key=lambda z: (self.device.zones[z].write_pointer, -z))

    def _place(self, lifetime_class: int) -> JobCommands:
        for zone_id, hint in self.zone_class.items():
            if hint == lifetime_class:
                return zone_id

        victim = None
        if len(self.zone_class) >= self.max_active:
            victim = self._finish_victim()
        if len(self.zone_class) < self.max_active or victim is not None:
            fresh = self._empty_zone()
            if fresh is None:
                fresh = self._grow(lifetime_class)
            if fresh is not None:
                if victim is not None:
                    yield self._finish(victim)
                    self.finishes += 1
                    del self.zone_class[victim]
                    self._reclaimable.add(victim)
                self.zone_class[fresh] = lifetime_class
                return fresh

        if self.zone_class:
            target = min(self.zone_class,
                         key=lambda z: (abs(self.zone_class[z] - lifetime_class), z))
            self.relaxed += 1
            self.device.trace.emit(self.op, "relax", zone=target,
                                   cls=self.classes[lifetime_class].name,
                                   hint=self.classes[self.zone_class[target]].name)
            return target

        raise OutOfSpace(
            f"No zone can accept data at operation {self.op}",
            op=self.op, lifetime_class=self.classes[lifetime_class].name,
        )

    # Files

    def _jitter(self, mean: int) -> int:
        return max(1, round(mean * self.file_rng.uniform(1 - LIFETIME_JITTER, 1 + LIFETIME_JITTER)))

    def _active_file(self, lifetime_class: int) -> HostFile:
        host_file = self.active.get(lifetime_class)
        if host_file is None:
            host_file = HostFile(self._next_file, lifetime_class,
                                 self._jitter(self.classes[lifetime_class].file_pages))
            self._next_file += 1
            self.files[host_file.file_id] = host_file
            self.active[lifetime_class] = host_file
        return host_file

    def _seal(self, host_file: HostFile) -> None:
        lifetime = self._jitter(self.classes[host_file.lifetime_class].lifetime_ops)
        host_file.death_op = self.op + lifetime
        heapq.heappush(self.deaths, (host_file.death_op, host_file.file_id))
        self.live[host_file.lifetime_class].append(host_file)
        del self.active[host_file.lifetime_class]

    def _program(self, zone_id: int, start: int, count: int):
        if self.zf.flexible_zones:
            return self.device.zone_append(zone_id, count)[1]
        return self.device.zone_write(zone_id, start, count)

    def _write(self, lifetime_class: int, pages: int) -> JobCommands:
        host_file = self._active_file(lifetime_class)
        while pages:
            zone_id = yield from self._place(lifetime_class)
            zone = self.device.zones[zone_id]
            start = zone.write_pointer
            count = min(pages, self.zone_pages - start)
            yield Command("write", zone_id, count,
                          lambda z=zone_id, s=start, n=count: self._program(z, s, n))
            host_file.extents.append(Extent(zone_id, start, count))
            host_file.written += count
            host_file.live_pages += count
            self.zone_valid[zone_id] += count
            pages -= count
            if zone.state is ZoneState.FULL:
                self.zone_class.pop(zone_id, None)
                self._reclaimable.add(zone_id)
        if host_file.written >= host_file.target_pages:
            self._seal(host_file)

    def _read(self, lifetime_class: int) -> JobCommands:
        for host_file in self.live[lifetime_class]:
            if host_file.extents:
                extent = host_file.extents[0]
                yield Command("read", extent.zone, 1,
                              lambda e=extent.zone, s=extent.start: self.device.zone_read(e, s, 1))
                return

    def _value_pages(self) -> int:
        if self.kv.value_pages_max is None:
            return self.kv.value_pages
        return self.op_rng.randint(self.kv.value_pages, self.kv.value_pages_max)

    def commands(self) -> JobCommands:
        """Issue the command stream of the whole operation mix."""
        kv = self.kv
        kinds = ("insert", "delete", "point_query", "update")
        ratios = (kv.insert, kv.delete, kv.point_query, kv.update)
        classes = range(len(self.classes))
        self._mark_series(0)

        for op in range(kv.total_ops):
            self.op = op
            self._expire()
            kind = self.op_rng.choices(kinds, weights=ratios)[0]
            lifetime_class = self.op_rng.choices(classes, weights=self.weights)[0]
            pages = self._value_pages()
            if kind in ("insert", "update"):
                yield from self._write(lifetime_class, pages)
            if kind in ("delete", "update"):
                self._invalidate_oldest(lifetime_class, pages)
            if kind == "point_query":
                yield from self._read(lifetime_class)
            yield from self._reclaim()
            self.ops_completed = op + 1


def format_commands(device) -> JobCommands:
    """Reset every non-empty zone, as formatting a fresh file system would."""
    def reset(zone_id: int):
        device.reset_zone(zone_id)
        return []

    for zone in device.zones:
        if zone.state is not ZoneState.EMPTY:
            yield Command("reset", zone.zone_id, 0, lambda z=zone.zone_id: reset(z))
