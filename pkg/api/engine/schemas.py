"""
Types for the discrete-event engine: timed events, issuer commands and per-job logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Generator, Optional, Sequence

from api.flash.schemas import Issuer, Receipt, ReceiptKind


@dataclass(frozen=True, slots=True)
class SimEvent:
    submit_time: float
    kind: ReceiptKind
    lun: Optional[int]
    duration: float
    tag: int = 0


@dataclass(frozen=True, slots=True)
class Command:
    """
    One command of a virtual issuer. ``action`` applies it to the device and
    returns the flash receipts to time.
    """
    kind: str
    zone: Optional[int]
    pages: int
    action: Callable[[], Sequence[Receipt]]


@dataclass(frozen=True, slots=True)
class OpRecord:
    job_id: int
    seq: int
    kind: str
    zone: Optional[int]
    pages: int
    submit: float
    complete: float

    @property
    def latency(self) -> float:
        return self.complete - self.submit


JobCommands = Generator[Command, Optional[OpRecord], None]


@dataclass
class Job:
    """
    A synchronous virtual issuer: it submits its next command when the previous
    one completes. Device-internal streams must carry the highest ids.
    """
    job_id: int
    name: str
    commands: JobCommands
    start_time: float = 0.0
    issuer: Issuer = Issuer.HOST


@dataclass
class JobLog:
    job_id: int
    name: str
    issuer: Issuer
    start_time: float
    records: list[OpRecord] = field(default_factory=list)

    @property
    def pages(self) -> int:
        return sum(record.pages for record in self.records)

    @property
    def end_time(self) -> float:
        return self.records[-1].complete if self.records else self.start_time

    @property
    def makespan(self) -> float:
        return self.end_time - self.start_time

    @property
    def latencies(self) -> list[float]:
        return [record.latency for record in self.records]

    @property
    def throughput(self) -> float:
        """Pages per second of virtual time."""
        if self.makespan <= 0:
            return 0.0
        return self.pages / (self.makespan / 1e6)
