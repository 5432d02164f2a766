"""
Zone allocator: picks the storage elements that back a logical zone.

Chunk selection decomposes by LUN (the G least-worn available chunks of every
LUN), stripe selection is a global top-Z by wear, and the two baselines map a
zone to one whole physical zone. Ties always go to the lowest element id.
"""

from __future__ import annotations

import logging
from itertools import combinations, product
from typing import Callable, Iterable, Sequence

from api.allocator.schemas import AllocationRequest, AllocationResult
from api.common.errors import (
    DirectZoneBusy, Infeasible, InsufficientAvailability, NoFreePhysicalZone,
)
from api.common.schemas import StrategyKind
from api.flash.schemas import StorageElement
from api.geometry.services import elements_per_zone

logger = logging.getLogger(__name__)

ORACLE_MAX_ELEMENTS = 20

Allocator = Callable[[AllocationRequest], AllocationResult]


def _wear_key(element: StorageElement) -> tuple[int, int]:
    return element.wear, element.id


def _interleave_by_lun(selected: Sequence[StorageElement], luns: int) -> list[StorageElement]:
    queues = [[e for e in selected if e.lun == lun] for lun in range(luns)]
    ordered: list[StorageElement] = []
    while any(queues):
        for queue in queues:
            if queue:
                ordered.append(queue.pop(0))
    return ordered


def _result(groups: Iterable[Sequence[StorageElement]], candidates: int, *,
            zone_id: int, relaxed: bool = False) -> AllocationResult:
    group_order = tuple(tuple(e.id for e in group) for group in groups)
    element_ids = tuple(eid for group in group_order for eid in group)
    objective = 0
    for group in groups:
        objective += sum(e.wear for e in group)
    return AllocationResult(
        element_ids=element_ids,
        group_order=group_order,
        objective_value=objective,
        candidates=candidates,
        relaxed=relaxed,
        zone_id=zone_id,
    )


def _chunk_groups(selected: Sequence[StorageElement], luns: int, strict: bool) -> list[list[StorageElement]]:
    """Group k pairs the k-th selected chunk of every LUN; relaxed selections are interleaved round-robin."""
    if strict:
        per_lun = [sorted((e for e in selected if e.lun == lun), key=_wear_key) for lun in range(luns)]
        return [[per_lun[lun][k] for lun in range(luns)] for k in range(len(per_lun[0]))]
    ordered = _interleave_by_lun(sorted(selected, key=_wear_key), luns)
    return [ordered[i:i + luns] for i in range(0, len(ordered), luns)]


def allocate_chunks(req: AllocationRequest) -> AllocationResult:
    """
    Select Z chunks minimizing total wear with exactly G = Z/L chunks per LUN.

    Args:
        req: Allocation request for a chunk strategy

    Returns:
        AllocationResult: Groups pair the k-th selected chunk of each LUN

    Raises:
        InsufficientAvailability: If some LUN has fewer than G available chunks
            and relaxed parallelism is off, or fewer than Z chunks are free overall
    """
    geom = req.state.geometry
    luns = geom.luns_total
    z = elements_per_zone(req.strategy, geom)
    g = z // luns

    per_lun: list[list[StorageElement]] = [[] for _ in range(luns)]
    for element in req.state:
        if element.is_available:
            per_lun[element.lun].append(element)
    candidates = sum(len(pool) for pool in per_lun)

    if all(len(pool) >= g for pool in per_lun):
        picks = [sorted(pool, key=_wear_key)[:g] for pool in per_lun]
        groups = [[picks[lun][k] for lun in range(luns)] for k in range(g)]
        return _result(groups, candidates, zone_id=req.zone_id)

    if not req.strategy.parallelism_relaxed:
        short = [lun for lun, pool in enumerate(per_lun) if len(pool) < g]
        raise InsufficientAvailability(
            f"LUN(s) {short} have fewer than {g} available chunks",
            zone=req.zone_id, required_per_lun=g, luns=short,
        )
    if candidates < z:
        raise InsufficientAvailability(
            f"Only {candidates} chunks available, {z} required",
            zone=req.zone_id, required=z, available=candidates,
        )
    chosen = sorted((e for pool in per_lun for e in pool), key=_wear_key)[:z]
    logger.debug("Zone %d: relaxed chunk allocation", req.zone_id)
    return _result(_chunk_groups(chosen, luns, strict=False), candidates,
                   zone_id=req.zone_id, relaxed=True)


def allocate_stripes(req: AllocationRequest) -> AllocationResult:
    """
    Select the Z least-worn available stripes.

    Raises:
        InsufficientAvailability: If fewer than Z stripes are available
    """
    z = elements_per_zone(req.strategy, req.state.geometry)
    pool = [element for element in req.state if element.is_available]
    if len(pool) < z:
        raise InsufficientAvailability(
            f"Only {len(pool)} stripes available, {z} required",
            zone=req.zone_id, required=z, available=len(pool),
        )
    chosen = sorted(pool, key=_wear_key)[:z]
    return _result([[element] for element in chosen], len(pool), zone_id=req.zone_id)


def allocate_baseline(req: AllocationRequest) -> AllocationResult:
    """
    Map a zone to one full physical zone.

    Direct mapping always uses physical zone ``zone_id``; lazy mapping takes
    the element that became free the longest ago, ignoring wear.

    Raises:
        DirectZoneBusy: If the fixed physical zone still holds a mapping
        NoFreePhysicalZone: If lazy mapping finds no free physical zone, or
            direct mapping has no physical zone with that id
    """
    state = req.state
    if req.strategy.kind is StrategyKind.DIRECT:
        if req.zone_id >= len(state):
            raise NoFreePhysicalZone(f"No physical zone {req.zone_id}", zone=req.zone_id)
        element = state[req.zone_id]
        if not element.is_available:
            raise DirectZoneBusy(
                f"Physical zone {req.zone_id} is still mapped (a={int(element.avail)})",
                zone=req.zone_id,
            )
        return _result([[element]], 1, zone_id=req.zone_id)

    pool = [element for element in state if element.is_available]
    if not pool:
        raise NoFreePhysicalZone("No free physical zone", zone=req.zone_id)
    element = min(pool, key=lambda e: state.release_stamps[e.id])
    return _result([[element]], len(pool), zone_id=req.zone_id)


def allocate(req: AllocationRequest) -> AllocationResult:
    """Dispatch to the allocator of the request's strategy."""
    kind = req.strategy.kind
    if kind is StrategyKind.CHUNK:
        return allocate_chunks(req)
    if kind is StrategyKind.STRIPE:
        return allocate_stripes(req)
    return allocate_baseline(req)


def _cheapest(selections: Iterable[Sequence[StorageElement]]) -> Sequence[StorageElement] | None:
    best = None
    best_key = None
    for selection in selections:
        key = (sum(e.wear for e in selection), sorted(e.id for e in selection))
        if best_key is None or key < best_key:
            best, best_key = selection, key
    return best


def oracle_solve(req: AllocationRequest) -> AllocationResult:
    """
    Exhaustive reference solver used to check the greedy allocators.

    Enumerates every selection satisfying the active constraints and returns
    one of minimal total wear. In relaxed chunk mode the strict constraint set
    is tried first, matching the greedy fallback order.

    Raises:
        ValueError: If the device has more than ORACLE_MAX_ELEMENTS elements
        Infeasible: If no selection satisfies the constraints
    """
    state = req.state
    if len(state) > ORACLE_MAX_ELEMENTS:
        raise ValueError(f"Oracle limited to {ORACLE_MAX_ELEMENTS} elements, got {len(state)}")

    kind = req.strategy.kind
    if kind in (StrategyKind.DIRECT, StrategyKind.LAZY):
        try:
            return allocate_baseline(req)
        except (DirectZoneBusy, NoFreePhysicalZone) as e:
            raise Infeasible(e.detail, zone=req.zone_id) from e

    geom = state.geometry
    z = elements_per_zone(req.strategy, geom)
    pool = [element for element in state if element.is_available]

    if kind is StrategyKind.STRIPE:
        best = _cheapest(combinations(pool, z))
        if best is None:
            raise Infeasible("No stripe selection of the required size", zone=req.zone_id, required=z)
        return _result([[e] for e in sorted(best, key=_wear_key)], len(pool), zone_id=req.zone_id)

    luns = geom.luns_total
    g = z // luns
    per_lun = [[e for e in pool if e.lun == lun] for lun in range(luns)]
    strict = product(*(combinations(lun_pool, g) for lun_pool in per_lun))
    best = _cheapest([e for part in choice for e in part] for choice in strict)
    if best is not None:
        return _result(_chunk_groups(best, luns, strict=True), len(pool), zone_id=req.zone_id)
    if req.strategy.parallelism_relaxed:
        best = _cheapest(combinations(pool, z))
        if best is not None:
            return _result(_chunk_groups(best, luns, strict=False), len(pool),
                           zone_id=req.zone_id, relaxed=True)
    raise Infeasible("No chunk selection satisfies the constraints", zone=req.zone_id, required=z)


def check_feasible(result: AllocationResult, req: AllocationRequest) -> list[str]:
    """
    List the constraint violations of a result against the pre-allocation state.

    Returns:
        list[str]: Empty when the result is feasible
    """
    state = req.state
    problems: list[str] = []
    z = elements_per_zone(req.strategy, state.geometry)
    if len(result.element_ids) != z:
        problems.append(f"selected {len(result.element_ids)} elements, expected {z}")
    if len(set(result.element_ids)) != len(result.element_ids):
        problems.append("element selected twice")
    unavailable = [eid for eid in result.element_ids if not state[eid].is_available]
    if unavailable:
        problems.append(f"unavailable elements selected: {unavailable}")
    if req.strategy.kind is StrategyKind.CHUNK and not result.relaxed:
        luns = state.geometry.luns_total
        counts = [0] * luns
        for eid in result.element_ids:
            counts[state[eid].lun] += 1
        if any(count != z // luns for count in counts):
            problems.append(f"per-LUN counts {counts} differ from G={z // luns}")
    objective = sum(state[eid].wear for eid in result.element_ids)
    if objective != result.objective_value:
        problems.append(f"objective {result.objective_value} does not match wear sum {objective}")
    return problems
