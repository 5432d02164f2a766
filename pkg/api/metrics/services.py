"""
Evaluation metrics: device-level write amplification, space amplification,
wear statistics and interference, plus recomputation of all of them from an
event trace.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from api.common.errors import EmptySeries, NoHostWrites, ZeroThroughput
from api.engine.schemas import OpRecord
from api.metrics.schemas import MetricsLedger, SpaceAmplification, WearStats

THROUGHPUT_WINDOW_US = 100_000.0


def dlwa(ledger: MetricsLedger) -> float:
    """
    Device-level write amplification (W_h + W_d) / W_h, to 4 decimals.

    Raises:
        NoHostWrites: If the host wrote nothing
    """
    if ledger.host_pages <= 0:
        raise NoHostWrites("DLWA is undefined without host writes")
    return round((ledger.host_pages + ledger.device_pages) / ledger.host_pages, 4)


def time_weighted_mean(series: Sequence[tuple[float, float]], end_time: float) -> float:
    """
    Average of a step function given as (t, value) points.

    Each value holds until the next point; the last one holds until
    ``end_time`` (never before its own timestamp).

    Raises:
        EmptySeries: If the series has no points
    """
    if not series:
        raise EmptySeries("No samples to average")
    times = np.array([t for t, _ in series], dtype=float)
    values = np.array([v for _, v in series], dtype=float)
    end = max(end_time, times[-1])
    span = end - times[0]
    if span <= 0:
        return float(values[-1])
    durations = np.diff(np.append(times, end))
    return float(np.dot(values, durations) / span)


def space_amplification(ledger: MetricsLedger, device_capacity: int,
                        end_time: float) -> SpaceAmplification:
    """
    Time-weighted average of invalidated-but-unreclaimed bytes.

    Args:
        ledger: Ledger holding the W_i series
        device_capacity: Capacity in bytes used for normalization
        end_time: Time the last sample holds until

    Returns:
        SpaceAmplification: Absolute bytes and the capacity-normalized value
    """
    avg = time_weighted_mean(ledger.invalidated_series, end_time)
    return SpaceAmplification(avg_bytes=round(avg, 4),
                              avg_normalized=round(avg / device_capacity, 6))


def wear_stats(snapshot: Sequence[int]) -> WearStats:
    """
    Per-block erase-count statistics.

    Args:
        snapshot: Erase count of every physical block

    Returns:
        WearStats: Median, population standard deviation, total and histogram
    """
    counts = np.asarray(snapshot, dtype=int)
    if counts.size == 0:
        return WearStats(median=0.0, stddev=0.0, total_erases=0, histogram={})
    histogram = np.bincount(counts)
    return WearStats(
        median=float(np.median(counts)),
        stddev=round(float(np.std(counts)), 4),
        total_erases=int(counts.sum()),
        histogram={int(k): int(v) for k, v in enumerate(histogram) if v},
    )


def interference_factor(base_tp: float, contended_tp: float) -> float:
    """
    Ratio of solo to contended throughput; 1.0 means no interference.

    Raises:
        ZeroThroughput: If either throughput is not positive
    """
    if base_tp <= 0 or contended_tp <= 0:
        raise ZeroThroughput("Throughput must be positive", base_tp=base_tp, contended_tp=contended_tp)
    return round(base_tp / contended_tp, 4)


def throughput_windows(records: Iterable[OpRecord], window_us: float = THROUGHPUT_WINDOW_US,
                       warmup_until: float = 0.0, until: Optional[float] = None) -> list[tuple[float, float]]:
    """
    Pages completed per window of virtual time, as pages per second.

    Completions before ``warmup_until`` are ignored; windows start at the warmup
    end. With ``until`` set, windows not complete by then are dropped.
    """
    buckets: Counter = Counter()
    for record in records:
        if record.complete < warmup_until:
            continue
        buckets[int((record.complete - warmup_until) // window_us)] += record.pages
    if not buckets:
        return []
    scale = 1e6 / window_us
    windows = [(warmup_until + index * window_us, buckets.get(index, 0) * scale)
               for index in range(max(buckets) + 1)]
    if until is not None:
        windows = [window for window in windows if window[0] + window_us <= until]
    return windows


def throughput_stddev(samples: Sequence[tuple[float, float]]) -> Optional[float]:
    """Population standard deviation of windowed throughput; None without windows."""
    if not samples:
        return None
    return round(float(np.std([pps for _, pps in samples])), 4)


def replay_metrics(events: Iterable[Mapping], page_size: int, end_time: float,
                   capacity_bytes: Optional[int] = None) -> dict:
    """
    Recompute ledger metrics from trace records.

    Args:
        events: Trace records of one run, in emission order
        page_size: Bytes per page
        end_time: Horizon the last W_i point holds until, in the time unit of
            the ``invalidate`` records (host operations for ZenFS-lite)
        capacity_bytes: Device capacity for ``sa_norm``

    Returns:
        dict: host and dummy pages and bytes, dlwa, sa_bytes, sa_norm,
        finishes, resets, allocations, per-element erase counts and the
        throughput windows
    """
    ledger = MetricsLedger()
    finishes = resets = allocations = 0
    for event in events:
        kind = event["kind"]
        if kind in ("write", "append"):
            ledger.host_pages += event["pages"]
        elif kind == "dummy":
            ledger.device_pages += event["pages"]
        elif kind == "invalidate":
            ledger.record_invalidation(event["t"], event["bytes"])
        elif kind == "erase":
            ledger.erase_counts[event["element"]] += 1
        elif kind == "finish":
            finishes += 1
        elif kind == "reset":
            resets += 1
        elif kind == "alloc":
            allocations += 1
        elif kind == "throughput":
            ledger.throughput_samples.append((event["t"], event["pps"]))
    sa = (space_amplification(ledger, capacity_bytes or 1, end_time)
          if ledger.invalidated_series else None)
    return {
        "host_pages": ledger.host_pages,
        "device_pages": ledger.device_pages,
        "host_bytes": ledger.host_pages * page_size,
        "dummy_bytes": ledger.device_pages * page_size,
        "dlwa": dlwa(ledger) if ledger.host_pages else None,
        "sa_bytes": sa.avg_bytes if sa else None,
        "sa_norm": sa.avg_normalized if sa and capacity_bytes else None,
        "erase_counts": dict(ledger.erase_counts),
        "throughput_samples": ledger.throughput_samples,
        "finishes": finishes,
        "resets": resets,
        "allocations": allocations,
    }
