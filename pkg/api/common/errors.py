"""
Exception hierarchy shared by every simulator module.

Services raise these errors; routers turn them into JSend error envelopes using
``status_code`` and the CLI turns them into process exit codes using ``exit_code``.
"""

from __future__ import annotations

from typing import Any


class SimulationError(Exception):
    """
    Base class for all simulator errors.

    Attributes:
        detail: Human readable description of the failure
        context: Structured values describing the failing state
    """
    status_code: int = 400
    exit_code: int = 2

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-friendly description of the error."""
        return {"error": type(self).__name__, "detail": self.detail, **self.context}

    if not hasattr(BaseException, "add_note"):  # Python < 3.11
        def add_note(self, note: str) -> None:
            if not isinstance(note, str):
                raise TypeError("note must be a str")
            if not hasattr(self, "__notes__"):
                self.__notes__ = []
            self.__notes__.append(note)


# Configuration

class ConfigError(SimulationError):
    """Invalid or unreadable configuration."""
    status_code = 400
    exit_code = 1


class MissingField(ConfigError):
    pass


class DivisibilityViolation(ConfigError):
    pass


class CapacityViolation(ConfigError):
    pass


class InvalidChunkSize(ConfigError):
    pass


# Logic faults: these signal a bug in the caller, never a workload outcome

class InvariantViolation(SimulationError):
    status_code = 500
    exit_code = 2


class IllegalTransition(InvariantViolation):
    pass


class ProgramOrderViolation(InvariantViolation):
    pass


class ProgramOnUnallocated(InvariantViolation):
    pass


class BlockFull(InvariantViolation):
    pass


class EraseValidData(InvariantViolation):
    pass


class Infeasible(InvariantViolation):
    """Raised by the exhaustive allocation oracle when no selection satisfies the constraints."""


# Device command errors

class DeviceError(SimulationError):
    status_code = 409
    exit_code = 2


class InsufficientAvailability(DeviceError):
    pass


class DirectZoneBusy(DeviceError):
    pass


class NoFreePhysicalZone(DeviceError):
    pass


class InvalidRequest(DeviceError):
    status_code = 400


class WritePointerViolation(DeviceError):
    pass


class ZoneFull(DeviceError):
    pass


class OpenZoneLimitExceeded(DeviceError):
    pass


class ReadBeyondWritePointer(DeviceError):
    pass


class ReadUnmappedZone(DeviceError):
    pass


# Metrics

class MetricsError(SimulationError):
    status_code = 422
    exit_code = 2


class NoHostWrites(MetricsError):
    pass


class EmptySeries(MetricsError):
    pass


class ZeroThroughput(MetricsError):
    pass


# Workload outcomes and artifacts

class OutOfSpace(SimulationError):
    """Terminal workload outcome: the host cannot place data anywhere."""
    status_code = 409
    exit_code = 0


class MissingRuns(SimulationError):
    status_code = 404
    exit_code = 1
