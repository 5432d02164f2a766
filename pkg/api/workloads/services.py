"""
Workload drivers: fio-like raw-device jobs, the FINISH interference bench,
ZenFS-lite runs and the repeated wear experiment.
"""

from __future__ import annotations

import logging
import random
from typing import Iterable, Optional

from api.common.errors import InsufficientAvailability, InvalidRequest, NoFreePhysicalZone, OutOfSpace
from api.engine.schemas import Command, Job, JobCommands, JobLog
from api.engine.services import Simulator, device_job
from api.geometry.schemas import DeviceGeometry, StrategyConfig
from api.metrics.schemas import MetricsLedger
from api.metrics.services import dlwa, interference_factor, space_amplification, throughput_windows, wear_stats
from api.workloads.schemas import (
    FioJobReport, FioJobSpec, FioPattern, FioReport, InterferenceReport, KvMixSpec,
    WearReport, ZenfsLiteConfig, ZenfsReport,
)
from api.workloads.zenfs import ZenfsLite, format_commands
from api.zones.services import ZonedDevice
from api.zones.trace import TraceRecorder

logger = logging.getLogger(__name__)

DEFAULT_FILL_FRACTION = 0.4
DEFAULT_WRITER_OPS = 200


def _fio_commands(spec: FioJobSpec, device: ZonedDevice) -> JobCommands:
    zone_id = spec.zone_id
    pages = spec.request_pages
    rng = random.Random(spec.rng_seed)
    cursor = 0
    for _ in range(spec.op_count):
        write_pointer = device.zone(zone_id).write_pointer
        if spec.pattern is FioPattern.SEQ_WRITE:
            yield Command("write", zone_id, pages,
                          lambda wp=write_pointer: device.zone_write(zone_id, wp, pages))
            continue
        if spec.pattern is FioPattern.SEQ_READ:
            if cursor + pages > write_pointer:
                cursor = 0
            start = cursor
            cursor += pages
        else:
            start = rng.randrange(max(write_pointer - pages, 0) + 1)
        yield Command("read", zone_id, pages, lambda s=start: device.zone_read(zone_id, s, pages))


def _job_report(log: JobLog, spec: FioJobSpec) -> FioJobReport:
    return FioJobReport(
        job_id=log.job_id,
        pattern=spec.pattern,
        zone_id=spec.zone_id,
        ops=len(log.records),
        pages=log.pages,
        makespan_us=log.makespan,
        throughput_pps=round(log.throughput, 4),
        latencies_us=log.latencies,
    )


def run_fio(specs: FioJobSpec | Iterable[FioJobSpec], device: ZonedDevice,
            sim: Optional[Simulator] = None) -> FioReport:
    """
    Run synchronous fio-like jobs, one dedicated zone per job.

    Args:
        specs: One job spec or several, executed concurrently
        device: Target device
        sim: Simulator to reuse (a fresh one otherwise)

    Returns:
        FioReport: Per-job latencies and throughput plus the aggregate throughput
        and the complete 100 ms throughput windows after the jobs start

    Raises:
        DeviceError: Device errors of any job, e.g. ReadBeyondWritePointer
    """
    if isinstance(specs, FioJobSpec):
        specs = [specs]
    specs = list(specs)
    sim = sim or Simulator(device.geometry, device)
    jobs = [Job(job_id, f"fio-{spec.pattern.value}-{spec.zone_id}", _fio_commands(spec, device),
                start_time=spec.start_time)
            for job_id, spec in enumerate(specs)]
    logs = sim.run_jobs(jobs)

    reports = [_job_report(logs[job_id], spec) for job_id, spec in enumerate(specs)]
    start = min(log.start_time for log in logs.values())
    end = max(log.end_time for log in logs.values())
    makespan = end - start
    pages = sum(report.pages for report in reports)
    aggregate = pages / (makespan / 1e6) if makespan > 0 else 0.0

    records = [record for log in logs.values() for record in log.records]
    windows = throughput_windows(records, warmup_until=start, until=end)
    device.ledger.throughput_samples = windows
    for window_start, pps in windows:
        device.trace.emit(window_start, "throughput", pps=pps)
    return FioReport(jobs=reports, makespan_us=makespan, aggregate_throughput_pps=round(aggregate, 4),
                     throughput_windows=windows)


def _writer(device: ZonedDevice, zone_id: int, ops: int) -> JobCommands:
    for _ in range(ops):
        write_pointer = device.zone(zone_id).write_pointer
        yield Command("write", zone_id, 1, lambda wp=write_pointer: device.zone_write(zone_id, wp, 1))


def _bench_phase(geometry: DeviceGeometry, strategy: StrategyConfig, n_jobs: int, fill_pages: int,
                 writer_ops: int, jitter: list[float], contended: bool,
                 trace: Optional[TraceRecorder]) -> tuple[float, int]:
    if trace is not None:
        trace.context["phase"] = 2 if contended else 1
    device = ZonedDevice(geometry, strategy, trace=trace)
    sim = Simulator(geometry, device)
    fill_zones = range(n_jobs, 2 * n_jobs)
    for zone_id in fill_zones:
        sim.execute(device.zone_write(zone_id, 0, fill_pages), 0.0)
    t0 = sim.horizon

    writers = [Job(i, f"writer-{i}", _writer(device, i, writer_ops), start_time=t0 + jitter[i])
               for i in range(n_jobs)]
    jobs = list(writers)
    if contended:
        jobs += [device_job(n_jobs + k, device, zone_id, start_time=t0)
                 for k, zone_id in enumerate(fill_zones)]

    def writers_done(logs: dict[int, JobLog]) -> bool:
        return all(len(logs[i].records) >= writer_ops for i in range(n_jobs))

    logs = sim.run_jobs(jobs, stop=writers_done)
    end = max(logs[i].end_time for i in range(n_jobs))
    pages = sum(logs[i].pages for i in range(n_jobs))
    for i in range(n_jobs):
        device.trace.emit(logs[i].end_time, "job", job=i, pages=logs[i].pages,
                          start=logs[i].start_time, contended=contended)
    return pages / ((end - t0) / 1e6), device.ledger.device_pages


def run_interference_bench(n_jobs: int, geometry: DeviceGeometry, strategy: StrategyConfig, *,
                           fill_fraction: float = DEFAULT_FILL_FRACTION,
                           writer_ops: int = DEFAULT_WRITER_OPS, seed: int = 0,
                           trace: Optional[TraceRecorder] = None) -> InterferenceReport:
    """
    Measure how much concurrent FINISH dummy writes slow down sequential writers.

    Zones 0..n-1 get one single-page synchronous writer each; zones n..2n-1 are
    filled to ``fill_fraction`` first. Phase 1 runs the writers alone, phase 2
    runs them while every filled zone is finished. Each phase uses a fresh device.

    Args:
        n_jobs: Writers and filled zones, 1 to 7 in the standard bench
        geometry: Device geometry
        strategy: Validated strategy
        fill_fraction: Occupancy of the zones to finish
        writer_ops: Pages each writer writes
        seed: Chooses the writers' start offsets within one program time
        trace: Recorder shared by both phases

    Returns:
        InterferenceReport: Both throughputs and their ratio

    Raises:
        InvalidRequest: If the device has too few zones or open slots
    """
    if n_jobs < 1 or 2 * n_jobs > min(geometry.zones_total, geometry.max_open_zones):
        raise InvalidRequest(
            f"{n_jobs} writers need {2 * n_jobs} open zones",
            n_jobs=n_jobs, zones_total=geometry.zones_total, max_open_zones=geometry.max_open_zones,
        )
    fill_pages = round(fill_fraction * geometry.zone_pages)
    rng = random.Random(seed)
    jitter = [rng.uniform(0.0, geometry.t_prog) for _ in range(n_jobs)]

    base_tp, _ = _bench_phase(geometry, strategy, n_jobs, fill_pages, writer_ops, jitter, False, trace)
    contended_tp, dummy_pages = _bench_phase(geometry, strategy, n_jobs, fill_pages, writer_ops,
                                             jitter, True, trace)
    factor = interference_factor(base_tp, contended_tp)
    logger.info("Interference %s n=%d: %.4f", strategy.label, n_jobs, factor)
    return InterferenceReport(
        strategy=strategy.label,
        n_jobs=n_jobs,
        fill_fraction=fill_fraction,
        fill_pages=fill_pages,
        dummy_pages=dummy_pages,
        base_throughput_pps=round(base_tp, 4),
        contended_throughput_pps=round(contended_tp, 4),
        interference_factor=factor,
    )


def run_zenfs_lite(kv: KvMixSpec, zf: ZenfsLiteConfig, device: ZonedDevice,
                   sim: Optional[Simulator] = None) -> ZenfsReport:
    """
    Drive the key-value mix through ZenFS-lite on a device.

    Running out of space ends the run with outcome ``out_of_space``; it is
    a workload result, not an error.

    Returns:
        ZenfsReport: DLWA, SA, dummy bytes, wear and makespan of the run
    """
    sim = sim or Simulator(device.geometry, device)
    host = ZenfsLite(device, kv, zf)
    outcome = "completed"
    try:
        sim.run_jobs([Job(0, "zenfs-lite", host.commands())])
    except (OutOfSpace, InsufficientAvailability, NoFreePhysicalZone) as e:
        outcome = "out_of_space"
        logger.warning("ZenFS-lite T=%d on %s ran out of space after %d ops: %s",
                       zf.finish_threshold, device.strategy.label, host.ops_completed, e.detail)
    host.close_series()

    geometry = device.geometry
    ledger = device.ledger
    sa = space_amplification(ledger, geometry.capacity_bytes, end_time=host.ops_completed)
    return ZenfsReport(
        strategy=device.strategy.label,
        finish_threshold=zf.finish_threshold,
        outcome=outcome,
        ops_completed=host.ops_completed,
        dlwa=dlwa(ledger) if ledger.host_pages else None,
        sa_bytes=sa.avg_bytes,
        sa_norm=sa.avg_normalized,
        host_bytes=ledger.host_pages * geometry.page_size,
        dummy_bytes=ledger.device_pages * geometry.page_size,
        wear=wear_stats(device.flash.block_wear()),
        makespan_us=sim.horizon,
        finishes=host.finishes,
        resets=host.resets,
        relaxed_placements=host.relaxed,
        zones_added=host.grown,
    )


def format_device(device: ZonedDevice, sim: Simulator) -> None:
    """Reset every non-empty zone at the simulator's current horizon."""
    sim.run_jobs([Job(0, "format", format_commands(device), start_time=sim.horizon)])


def run_wear_experiment(kv: KvMixSpec, zf: ZenfsLiteConfig, device: ZonedDevice,
                        repetitions: int = 8) -> WearReport:
    """
    Repeat ZenFS-lite on the same device, formatting the file system between runs.

    Device wear carries over; each repetition gets a fresh ledger and the
    seed ``kv.rng_seed + repetition``.
    """
    sim = Simulator(device.geometry, device)
    runs: list[ZenfsReport] = []
    for repetition in range(repetitions):
        if repetition:
            format_device(device, sim)
        device.ledger = MetricsLedger()
        run_kv = kv.model_copy(update={"rng_seed": kv.rng_seed + repetition})
        runs.append(run_zenfs_lite(run_kv, zf, device, sim))
        logger.info("Wear repetition %d/%d on %s: %s", repetition + 1, repetitions,
                    device.strategy.label, runs[-1].outcome)
    return WearReport(
        strategy=device.strategy.label,
        repetitions=repetitions,
        runs=runs,
        wear=wear_stats(device.flash.block_wear()),
    )
