"""
Deterministic discrete-event scheduler.

Each LUN is one server: an operation starts at max(submit time, LUN next-free)
and occupies the LUN for its duration. Allocation delays run on a separate
controller timeline and hold back the rest of their command.
"""

from __future__ import annotations

import heapq
import logging
from typing import Callable, Iterable, Optional, Sequence

try:
    from itertools import batched
except ImportError:  # Python < 3.12
    from itertools import islice

    def batched(iterable, n):
        if n < 1:
            raise ValueError("n must be at least one")
        it = iter(iterable)
        while batch := tuple(islice(it, n)):
            yield batch

from api.common.errors import InvalidRequest, SimulationError
from api.engine.schemas import Command, Job, JobCommands, JobLog, OpRecord, SimEvent
from api.flash.schemas import Issuer, Receipt, ReceiptKind
from api.geometry.schemas import DeviceGeometry

logger = logging.getLogger(__name__)

StopCondition = Callable[[dict[int, JobLog]], bool]


class Simulator:
    """
    Virtual-time LUN model for one device.

    Args:
        geometry: Device geometry (number of LUNs)
        device: Optional zoned device whose ``now`` is set before each command
    """

    def __init__(self, geometry: DeviceGeometry, device=None):
        self.geometry = geometry
        self.device = device
        self.lun_free = [0.0] * geometry.luns_total
        self.lun_busy = [0.0] * geometry.luns_total
        self.controller_free = 0.0
        self.controller_busy = 0.0

    @property
    def horizon(self) -> float:
        """Time at which every resource is idle."""
        return max([self.controller_free, *self.lun_free])

    def submit(self, event: SimEvent) -> float:
        """
        Schedule one operation.

        Returns:
            float: Completion time in microseconds
        """
        if event.lun is None:
            start = max(event.submit_time, self.controller_free)
            self.controller_free = start + event.duration
            self.controller_busy += event.duration
            return self.controller_free
        if not 0 <= event.lun < len(self.lun_free):
            raise InvalidRequest(f"LUN {event.lun} does not exist", lun=event.lun)
        start = max(event.submit_time, self.lun_free[event.lun])
        completion = start + event.duration
        self.lun_free[event.lun] = completion
        self.lun_busy[event.lun] += event.duration
        return completion

    def execute(self, receipts: Sequence[Receipt], at: float, tag: int = 0) -> float:
        """
        Time all receipts of one command submitted at ``at``.

        Returns:
            float: Completion time of the command (``at`` when it has no receipts)
        """
        barrier = at
        for receipt in receipts:
            if receipt.kind is ReceiptKind.ALLOC_DELAY:
                barrier = max(barrier, self.submit(
                    SimEvent(at, receipt.kind, None, receipt.duration, tag)))
        completion = barrier
        for receipt in receipts:
            if receipt.kind is not ReceiptKind.ALLOC_DELAY:
                completion = max(completion, self.submit(
                    SimEvent(barrier, receipt.kind, receipt.lun, receipt.duration, tag)))
        return completion

    def run_jobs(self, jobs: Iterable[Job], stop: Optional[StopCondition] = None) -> dict[int, JobLog]:
        """
        Run synchronous issuers until they are exhausted or ``stop`` says so.

        Commands are merged by (next submit time, job id). Each generator is
        sent the OpRecord of its previous command.

        Returns:
            dict[int, JobLog]: Per-job op logs keyed by job id

        Raises:
            SimulationError: Device errors, annotated with the issuing job
        """
        jobs = {job.job_id: job for job in jobs}
        logs = {
            job_id: JobLog(job_id, job.name, job.issuer, job.start_time)
            for job_id, job in jobs.items()
        }
        previous: dict[int, Optional[OpRecord]] = {job_id: None for job_id in jobs}
        heap = [(job.start_time, job_id) for job_id, job in jobs.items()]
        heapq.heapify(heap)

        while heap:
            if stop is not None and stop(logs):
                break
            now, job_id = heapq.heappop(heap)
            job = jobs[job_id]
            if self.device is not None:
                self.device.now = now
            try:
                command = job.commands.send(previous[job_id])
                receipts = command.action()
            except StopIteration:
                continue
            except SimulationError as e:
                e.context.setdefault("job", job_id)
                e.add_note(f"issued by job {job_id} ({job.name}) at t={now}")
                raise
            completion = self.execute(receipts, now, tag=job_id)
            record = OpRecord(job_id, len(logs[job_id].records), command.kind, command.zone,
                              command.pages, now, completion)
            logs[job_id].records.append(record)
            previous[job_id] = record
            heapq.heappush(heap, (completion, job_id))
        return logs


def finish_stream(device, zone_id: int, row_size: Optional[int] = None) -> JobCommands:
    """
    Device-internal issuer for a FINISH: seals the zone, then submits the
    dummy programs one row (one page per LUN) at a time.
    """
    reports = []

    def finish():
        reports.append(device.finish_zone(zone_id))
        return []

    yield Command("finish", zone_id, 0, finish)
    for row in batched(reports[0].receipts, row_size or device.geometry.luns_total):
        yield Command("dummy", zone_id, len(row), lambda row=row: row)


def device_job(job_id: int, device, zone_id: int, start_time: float = 0.0) -> Job:
    """Wrap ``finish_stream`` as a device-internal job."""
    return Job(job_id, f"finish-{zone_id}", finish_stream(device, zone_id),
               start_time=start_time, issuer=Issuer.DEVICE)
