"""
Services turning a finished run directory into per-figure CSV tables.

Every table is computed from metrics.csv, summary.json and the per-seed event
traces only, so a report can be rebuilt at any time without rerunning.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Callable, Iterator, Optional

import pandas as pd

from api.common.errors import MissingRuns
from api.reports.schemas import ReportTables
from api.zones.trace import read_trace

logger = logging.getLogger(__name__)

BASELINES = ("direct", "lazy")


def _count_out_of_space(outcomes: pd.Series) -> int:
    return int((outcomes == "out_of_space").sum())


def load_metrics(run_dir: Path) -> pd.DataFrame:
    """
    Read metrics.csv of a run directory.

    Raises:
        MissingRuns: If the directory holds no completed runs
    """
    path = run_dir / "metrics.csv"
    if not path.is_file():
        raise MissingRuns(f"No metrics.csv in {run_dir}", run_dir=str(run_dir))
    frame = pd.read_csv(path)
    if frame.empty:
        raise MissingRuns(f"metrics.csv in {run_dir} has no rows", run_dir=str(run_dir))
    return frame


def load_summary(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.is_file():
        raise MissingRuns(f"No summary.json in {run_dir}", run_dir=str(run_dir))
    return json.loads(path.read_text(encoding="utf-8"))


def _traces(run_dir: Path, summary: dict, workload: Optional[str] = None) -> Iterator[tuple[dict, int, Path]]:
    for run in summary["plan"]["runs"]:
        if workload is not None and run["workload"] != workload:
            continue
        for seed in run["seeds"]:
            path = run_dir / run["run_id"] / f"seed-{seed}" / "events.jsonl"
            if path.is_file():
                yield run, seed, path
            else:
                logger.warning("Missing trace %s", path)


def dlwa_reduction_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    """DLWA per strategy and occupancy, with the reduction against the full-zone baselines."""
    rows = metrics[metrics["workload"] == "occupancy"]
    if rows.empty:
        return None
    table = rows.groupby(["strategy", "occupancy"], as_index=False)["dlwa"].mean()
    baseline = (table[table["strategy"].isin(BASELINES)]
                .groupby("occupancy")["dlwa"].mean().rename("baseline_dlwa"))
    table = table.join(baseline, on="occupancy")
    table["reduction_pct"] = ((1 - table["dlwa"] / table["baseline_dlwa"]) * 100).round(2)
    return table.sort_values(["strategy", "occupancy"]).reset_index(drop=True)


def _threshold_table(metrics: pd.DataFrame, **columns) -> Optional[pd.DataFrame]:
    rows = metrics[metrics["workload"] == "zenfs"]
    if rows.empty:
        return None
    table = rows.groupby(["strategy", "finish_threshold"], as_index=False).agg(**columns)
    return table.sort_values(["strategy", "finish_threshold"]).reset_index(drop=True)


def space_amplification_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    return _threshold_table(
        metrics,
        sa_bytes=("sa_bytes", "mean"),
        sa_norm=("sa_norm", "mean"),
        seeds=("seed", "count"),
        out_of_space=("outcome", _count_out_of_space),
    )


def dummy_bytes_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    return _threshold_table(
        metrics,
        dummy_bytes=("dummy_bytes", "mean"),
        host_bytes=("host_bytes", "mean"),
        seeds=("seed", "count"),
    )


def latency_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    return _threshold_table(
        metrics,
        makespan_us=("makespan_us", "mean"),
        ops_completed=("ops_completed", "mean"),
        seeds=("seed", "count"),
    )


def tradeoff_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    return _threshold_table(metrics, dlwa=("dlwa", "mean"), sa_norm=("sa_norm", "mean"))


def interference_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    rows = metrics[metrics["workload"] == "interference"]
    if rows.empty:
        return None
    table = rows.groupby(["strategy", "jobs"], as_index=False).agg(
        interference=("interference", "mean"),
        seeds=("seed", "count"),
    )
    return table.sort_values(["strategy", "jobs"]).reset_index(drop=True)


def throughput_table(metrics: pd.DataFrame) -> Optional[pd.DataFrame]:
    rows = metrics[metrics["workload"] == "fio"]
    if rows.empty:
        return None
    table = rows.groupby(["strategy", "pattern", "jobs"], as_index=False).agg(
        throughput_pps=("throughput_pps", "mean"),
        throughput_stddev=("throughput_stddev", "mean"),
        makespan_us=("makespan_us", "mean"),
    )
    return table.sort_values(["strategy", "pattern", "jobs"]).reset_index(drop=True)


def throughput_series_table(run_dir: Path, summary: dict) -> Optional[pd.DataFrame]:
    """Windowed fio throughput over virtual time, one row per complete window."""
    records = []
    for run, seed, path in _traces(run_dir, summary, workload="fio"):
        records.extend(
            {"strategy": run["strategy"], "run_id": run["run_id"], "seed": seed,
             "window_us": event["t"], "throughput_pps": event["pps"]}
            for event in read_trace(path) if event["kind"] == "throughput"
        )
    if not records:
        return None
    return pd.DataFrame.from_records(records)


def wear_histogram_table(run_dir: Path, summary: dict) -> Optional[pd.DataFrame]:
    """
    Per-block erase-count histogram of every wear run.

    Each erase record covers all blocks of one element, so an element erased
    k times contributes its block count to bucket k; blocks never erased fill
    bucket 0.
    """
    total_blocks = summary["total_blocks"]
    records = []
    for run, seed, path in _traces(run_dir, summary, workload="wear"):
        erases: Counter = Counter()
        blocks: dict[int, int] = {}
        for event in read_trace(path):
            if event["kind"] == "erase":
                erases[event["element"]] += 1
                blocks[event["element"]] = event["blocks"]
        histogram: Counter = Counter()
        for element, count in erases.items():
            histogram[count] += blocks[element]
        histogram[0] += total_blocks - sum(blocks.values())
        records.extend(
            {"strategy": run["strategy"], "seed": seed, "erase_count": count, "blocks": histogram[count]}
            for count in sorted(histogram)
        )
    if not records:
        return None
    return pd.DataFrame.from_records(records)


def allocation_table(run_dir: Path, summary: dict) -> Optional[pd.DataFrame]:
    """Allocations, mean candidate elements and elements per zone, per strategy."""
    records = []
    for run, _, path in _traces(run_dir, summary):
        records.extend(
            {"strategy": run["strategy"], "candidates": event["candidates"],
             "elements": len(event["elements"])}
            for event in read_trace(path) if event["kind"] == "alloc"
        )
    if not records:
        return None
    frame = pd.DataFrame.from_records(records)
    table = frame.groupby("strategy", as_index=False).agg(
        allocations=("candidates", "count"),
        mean_candidates=("candidates", "mean"),
        elements_per_zone=("elements", "mean"),
    )
    return table.sort_values("strategy").reset_index(drop=True)


METRICS_TABLES: dict[str, Callable[[pd.DataFrame], Optional[pd.DataFrame]]] = {
    "fig3a_dlwa": dlwa_reduction_table,
    "fig3b_sa": space_amplification_table,
    "fig3c_dummy": dummy_bytes_table,
    "fig4a_interference": interference_table,
    "fig4b_throughput": throughput_table,
    "fig4c_latency": latency_table,
    "fig1_tradeoff": tradeoff_table,
}

TRACE_TABLES: dict[str, Callable[[Path, dict], Optional[pd.DataFrame]]] = {
    "fig3d_wear_hist": wear_histogram_table,
    "fig4b_throughput_series": throughput_series_table,
    "fig4d_allocation": allocation_table,
}


def build_reports(run_dir: str | Path) -> ReportTables:
    """
    Write every table that the run directory has data for.

    Args:
        run_dir: Output directory of a previous ``run``

    Returns:
        ReportTables: Paths of the written tables

    Raises:
        MissingRuns: If metrics.csv or summary.json is missing or empty
    """
    run_dir = Path(run_dir)
    metrics = load_metrics(run_dir)
    summary = load_summary(run_dir)

    tables: dict[str, pd.DataFrame] = {}
    for name, build in METRICS_TABLES.items():
        table = build(metrics)
        if table is not None:
            tables[name] = table
    for name, build in TRACE_TABLES.items():
        table = build(run_dir, summary)
        if table is not None:
            tables[name] = table

    paths = {}
    for name, table in tables.items():
        path = run_dir / f"{name}.csv"
        table.to_csv(path, index=False, lineterminator="\n")
        paths[name] = str(path)
        logger.info("Wrote %s (%d rows)", path, len(table))
    return ReportTables(run_dir=str(run_dir), tables=paths)
