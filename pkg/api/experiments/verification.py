"""
Self-checks of the simulator: greedy allocators against the exhaustive oracle,
the availability transition table, and randomized zone command sequences
replayed on every strategy at once.

Every suite returns the number of checks it ran and the failures it found;
a failure is a JSON-friendly dict with enough state to replay it.
"""

from __future__ import annotations

import dataclasses
import logging
import random
from itertools import product
from typing import Any, Optional

from api.allocator.schemas import AllocationRequest, AllocationResult
from api.allocator.services import Allocator, allocate, check_feasible, oracle_solve
from api.common.errors import DeviceError, Infeasible, IllegalTransition
from api.common.schemas import StrategyKind
from api.common.utils import dumps_line
from api.experiments.schemas import VerifyReport
from api.flash.schemas import Availability, ElementEvent, StorageElement
from api.flash.services import FlashState, element_transition
from api.geometry.schemas import DeviceGeometry, StrategyConfig
from api.geometry.services import validate_geometry, validate_strategy
from api.zones.services import ZonedDevice
from api.zones.trace import TraceRecorder

logger = logging.getLogger(__name__)

SCOPES = ("allocator", "statemachine", "invariants", "all")

# The legal availability edges, written out independently of the flash module
EXPECTED_EDGES: dict[tuple[int, str], int] = {
    (0, "allocate"): 1,
    (3, "allocate"): 1,
    (1, "first_program"): 2,
    (1, "finish_release"): 0,
    (1, "reset_release"): 0,
    (2, "reset_invalidate"): 3,
    (3, "erase_complete"): 0,
}

SEQUENCE_LENGTH = 200
DEFAULT_COMMANDS = 100_000

INVARIANT_DEVICES: list[tuple[dict[str, Any], list[str]]] = [
    ({"profile": "g-small"}, ["direct", "lazy", "chunk-1", "chunk-2", "stripe"]),
    ({"channels": 2, "pages_per_block": 4, "page_size": 4096, "blocks_per_zone": 8,
      "zones_total": 4, "max_open_zones": 3},
     ["direct", "lazy", "chunk-1", "chunk-2", "chunk-4", "stripe"]),
]


# Allocator against oracle

def _random_allocation_request(rng: random.Random) -> AllocationRequest:
    """A random single-zone request over at most 16 elements."""
    mode = rng.choice(("chunk-strict", "chunk-relaxed", "stripe"))
    luns = rng.choice((1, 2, 4))
    e = rng.choice((1, 2, 4))
    if mode == "stripe":
        strategy = StrategyConfig(kind=StrategyKind.STRIPE)
        blocks_per_lun = e * rng.randint(1, 16 // e)
    else:
        chunk_size = rng.choice([c for c in (1, 2, 4) if e % c == 0])
        per_lun = e // chunk_size
        blocks_per_lun = e * rng.randint(1, (16 // luns) // per_lun)
        strategy = StrategyConfig(kind=StrategyKind.CHUNK, chunk_size=chunk_size,
                                  parallelism_relaxed=mode == "chunk-relaxed")
    geometry = validate_geometry({
        "channels": luns, "pages_per_block": 4, "page_size": 4096,
        "blocks_per_zone": luns * e, "zones_total": 1, "max_open_zones": 1,
        "blocks_per_lun": blocks_per_lun,
    })
    state = FlashState(geometry, validate_strategy(strategy, geometry))
    for element in state:
        element.wear = rng.randint(0, 5)
        element.avail = rng.choices(list(Availability), weights=(4, 1, 1, 2))[0]
    return AllocationRequest(zone_id=0, strategy=state.strategy, state=state)


def _solve(solver: Allocator, req: AllocationRequest) -> tuple[Optional[AllocationResult], Optional[str]]:
    try:
        return solver(req), None
    except (DeviceError, Infeasible) as e:
        return None, type(e).__name__


def _allocation_dump(req: AllocationRequest, result: Optional[AllocationResult]) -> Optional[dict]:
    if result is None:
        return None
    record = dataclasses.asdict(result)
    record["wears"] = [req.state[eid].wear for eid in result.element_ids]
    return record


def verify_allocator(instances: int = 1000, seed: int = 0,
                     allocator: Optional[Allocator] = None) -> tuple[int, list[dict]]:
    """
    Compare an allocator with the exhaustive oracle on random instances.

    Args:
        instances: Number of random instances
        seed: Seed of the instance generator
        allocator: Allocator under test, the production dispatcher by default

    Returns:
        tuple: (instances checked, failures)
    """
    allocator = allocator or allocate
    rng = random.Random(seed)
    failures: list[dict] = []
    for index in range(instances):
        req = _random_allocation_request(rng)
        expected, expected_error = _solve(oracle_solve, req)
        got, got_error = _solve(allocator, req)

        problems: list[str] = []
        if (expected is None) != (got is None):
            problems.append(f"oracle {'infeasible' if expected is None else 'feasible'}, "
                            f"allocator {got_error or 'returned a selection'}")
        elif got is not None:
            problems.extend(check_feasible(got, req))
            if got.objective_value != expected.objective_value:
                problems.append(f"objective {got.objective_value} != oracle {expected.objective_value}")
            if got.relaxed != expected.relaxed:
                problems.append(f"relaxed={got.relaxed}, oracle relaxed={expected.relaxed}")
        if problems:
            failures.append({
                "suite": "allocator",
                "instance": index,
                "strategy": req.strategy.label,
                "parallelism_relaxed": req.strategy.parallelism_relaxed,
                "geometry": req.state.geometry.model_dump(),
                "elements": req.state.snapshot(),
                "allocator": _allocation_dump(req, got),
                "oracle": _allocation_dump(req, expected),
                "problems": problems,
            })
            break
    return index + 1 if instances else 0, failures


# Availability state machine

def verify_state_machine() -> tuple[int, list[dict]]:
    """Apply every event to an element in every state and compare with the legal table."""
    failures: list[dict] = []
    checked = 0
    for state, event in product(Availability, ElementEvent):
        checked += 1
        element = StorageElement(id=0, lun=0, block_ids=(0,), block_luns=(0,), avail=state,
                                 programmed_pages=[0])
        try:
            reached: Optional[int] = int(element_transition(element, event).avail)
        except IllegalTransition:
            reached = None
        expected = EXPECTED_EDGES.get((int(state), event.value))
        problems = []
        if reached != expected:
            problems.append(f"reached {reached}, expected {expected}")
        wiped = state is Availability.FREE_INVALID and reached is not None
        if element.wear != int(wiped):
            problems.append(f"wear {element.wear} after {event.value} from {int(state)}")
        if problems:
            failures.append({"suite": "statemachine", "state": int(state), "event": event.value,
                             "element": element.to_record(), "problems": problems})
    return checked, failures


# Randomized command sequences

def _devices(geometry: DeviceGeometry, labels: list[str], keep_trace: bool) -> dict[str, ZonedDevice]:
    return {
        label: ZonedDevice(geometry, validate_strategy(label, geometry),
                           trace=TraceRecorder() if keep_trace else None)
        for label in labels
    }


def _random_command(rng: random.Random, reference: ZonedDevice) -> tuple[str, int, int, int]:
    geometry = reference.geometry
    zone_id = rng.randrange(geometry.zones_total)
    write_pointer = reference.zones[zone_id].write_pointer
    kind = rng.choices(("write", "append", "read", "finish", "reset"), weights=(6, 3, 3, 1, 1))[0]
    pages = rng.randint(1, max(1, geometry.zone_pages // 3))
    start = write_pointer
    if kind == "write" and rng.random() < 0.05:
        start = write_pointer + 1
    elif kind == "read":
        start = rng.randrange(write_pointer) if write_pointer else 0
        pages = rng.randint(1, max(1, write_pointer - start))
    return kind, zone_id, start, pages


def _apply(device: ZonedDevice, command: tuple[str, int, int, int]) -> Optional[str]:
    kind, zone_id, start, pages = command
    try:
        if kind == "write":
            device.zone_write(zone_id, start, pages)
        elif kind == "append":
            device.zone_append(zone_id, pages)
        elif kind == "read":
            device.zone_read(zone_id, start, pages)
        elif kind == "finish":
            device.finish_zone(zone_id)
        else:
            device.reset_zone(zone_id)
    except DeviceError as e:
        return type(e).__name__
    return None


def _dominance_pairs(labels: list[str]) -> list[tuple[str, str]]:
    """(a, b) pairs where a never writes more dummy pages than b."""
    chunks = sorted(int(label.split("-")[1]) for label in labels if label.startswith("chunk-"))
    pairs = [(f"chunk-{small}", f"chunk-{big}")
             for small in chunks for big in chunks if small < big and big % small == 0]
    if 1 in chunks and "stripe" in labels:
        pairs.append(("chunk-1", "stripe"))
    if "direct" in labels:
        pairs.extend((label, "direct") for label in labels if label != "direct")
    return pairs


def _run_sequence(geometry: DeviceGeometry, labels: list[str], seed: int, length: int,
                  keep_trace: bool = False) -> tuple[dict[str, ZonedDevice], list[dict]]:
    rng = random.Random(seed)
    devices = _devices(geometry, labels, keep_trace)
    reference = devices[labels[0]]
    failures: list[dict] = []

    for step in range(length):
        command = _random_command(rng, reference)
        before = {label: [zone.write_pointer for zone in device.zones] for label, device in devices.items()}
        outcomes = {label: _apply(device, command) for label, device in devices.items()}
        problems: list[str] = []
        if len(set(outcomes.values())) > 1:
            problems.append(f"host-visible outcomes differ: {outcomes}")
        for label, device in devices.items():
            problems.extend(f"{label}: {problem}" for problem in device.check_invariants())
            for zone, previous in zip(device.zones, before[label]):
                resetting = command[0] == "reset" and command[1] == zone.zone_id
                if zone.write_pointer < previous and not resetting:
                    problems.append(f"{label}: zone {zone.zone_id} wp moved back {previous} -> {zone.write_pointer}")
        if problems:
            failures.append({
                "suite": "invariants", "seed": seed, "step": step, "command": list(command),
                "geometry": geometry.model_dump(), "problems": problems,
                "elements": {label: device.flash.snapshot() for label, device in devices.items()},
            })
            return devices, failures

    dummy = {label: device.ledger.device_pages for label, device in devices.items()}
    problems = [f"{a} wrote {dummy[a]} dummy pages, more than {b} ({dummy[b]})"
                for a, b in _dominance_pairs(labels) if dummy[a] > dummy[b]]
    if "lazy" in dummy and "direct" in dummy and dummy["lazy"] != dummy["direct"]:
        problems.append(f"baselines differ: direct {dummy['direct']}, lazy {dummy['lazy']}")
    if problems:
        failures.append({"suite": "dominance", "seed": seed, "geometry": geometry.model_dump(),
                         "dummy_pages": dummy, "problems": problems})
    return devices, failures


def _trace_lines(devices: dict[str, ZonedDevice]) -> dict[str, list[str]]:
    return {label: [dumps_line(record) for record in device.trace.events]
            for label, device in devices.items()}


def verify_invariants(commands: int = DEFAULT_COMMANDS, seed: int = 0) -> tuple[int, list[dict]]:
    """
    Replay random command sequences on every strategy of each test geometry.

    After every command each device must satisfy its invariants, write
    pointers may only move back on RESET, and host-visible outcomes must agree
    across strategies. After every sequence the dummy page totals must respect
    the granularity dominance chain. The first sequence of each geometry is run
    twice and its traces compared byte for byte.

    Each command counts once however many devices replay it; the last
    sequence is cut short so exactly ``commands`` are applied.

    Returns:
        tuple: (distinct commands applied, failures)
    """
    applied = 0
    sequence = 0
    checked_determinism: set[int] = set()
    while applied < commands:
        index = sequence % len(INVARIANT_DEVICES)
        raw, labels = INVARIANT_DEVICES[index]
        geometry = validate_geometry(raw)
        sequence_seed = seed * 1_000_003 + sequence
        first = index not in checked_determinism
        length = min(SEQUENCE_LENGTH, commands - applied)
        devices, failures = _run_sequence(geometry, labels, sequence_seed, length, keep_trace=first)
        if failures:
            return applied, failures
        if first:
            checked_determinism.add(index)
            again, _ = _run_sequence(geometry, labels, sequence_seed, length, keep_trace=True)
            if _trace_lines(devices) != _trace_lines(again):
                return applied, [{"suite": "determinism", "seed": sequence_seed,
                                  "geometry": geometry.model_dump(),
                                  "problems": ["traces differ between identical reruns"]}]
        applied += length
        sequence += 1
    return applied, []


def run_verification(scope: str = "all", instances: int = 1000, commands: int = DEFAULT_COMMANDS,
                     seed: int = 0, allocator: Optional[Allocator] = None) -> VerifyReport:
    """
    Run the requested self-check suites.

    Args:
        scope: ``allocator``, ``statemachine``, ``invariants`` or ``all``
        instances: Random allocator instances
        commands: Zone commands for the invariant sweep
        seed: Base seed
        allocator: Allocator under test (mutation testing)

    Returns:
        VerifyReport: Counts per suite and the first failing counterexample

    Raises:
        ValueError: If the scope is unknown
    """
    if scope not in SCOPES:
        raise ValueError(f"Unknown verify scope '{scope}', expected one of {SCOPES}")
    checks: dict[str, int] = {}
    failures: list[dict] = []
    if scope in ("allocator", "all"):
        checks["allocator"], found = verify_allocator(instances, seed, allocator)
        failures.extend(found)
    if scope in ("statemachine", "all"):
        checks["statemachine"], found = verify_state_machine()
        failures.extend(found)
    if scope in ("invariants", "all"):
        checks["invariants"], found = verify_invariants(commands, seed)
        failures.extend(found)
    for failure in failures:
        logger.error("Verification failure in %s: %s", failure["suite"], failure["problems"])
    return VerifyReport(scope=scope, passed=not failures, checks=checks, failures=failures[:1])
