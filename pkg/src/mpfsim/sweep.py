"""Parameter sweeps: cell expansion, execution, and aggregation.

A sweep is the Cartesian product of a few config axes (dotted paths into
the scenario document) run for several replications each.  Cell seeds are
derived from the sweep's master seed and the cell's own axis settings, so
re-running a pruned copy of a sweep file reproduces the surviving cells
bit for bit.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import statistics
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Any, Iterable, NamedTuple, Sequence

from . import config as cfgmod
from .core import ConfigError
from .engine import run
from .metrics import METRIC_COLUMNS, compute_report
from .rng import derive_seed

LOG = logging.getLogger(__name__)


class SweepCell(NamedTuple):
    index: int
    settings: tuple[tuple[str, Any], ...]  # (dotted path, value) in axis order

    def label(self) -> str:
        return " ".join(f"{path}={value}" for path, value in self.settings)


@dataclass(frozen=True)
class SweepSpec:
    """A validated sweep: base document, ordered axes, replications, seed."""

    base: dict
    axes: tuple[tuple[str, tuple[Any, ...]], ...]
    replications: int
    seed: int

    def __post_init__(self) -> None:
        if not self.axes:
            raise ConfigError("axes", "at least one axis is required")
        if self.replications < 1:
            raise ConfigError("replications", "must be a positive integer")

    @classmethod
    def from_document(cls, doc: dict) -> "SweepSpec":
        if "seed" not in doc:
            raise ConfigError("seed", "required (sweeps must be reproducible)")
        axes = tuple((str(k), tuple(v)) for k, v in doc.get("axes", {}).items())
        return cls(
            base=doc.get("base", {}),
            axes=axes,
            replications=int(doc.get("replications", 1)),
            seed=int(doc["seed"]),
        )

    def expand(self) -> list[SweepCell]:
        """All cells in axis order (first axis varies slowest).

        When an ``mpr`` axis includes 0 alongside a topology axis, the
        topology is moot for those cells (nobody is equipped), so only the
        first topology value is kept at mpr 0.
        """
        paths = [path for path, _ in self.axes]
        value_lists = [values for _, values in self.axes]
        raw = itertools.product(*value_lists)
        topo_axis = "controller.topology"
        first_topo = dict(self.axes).get(topo_axis, (None,))[0]
        cells: list[SweepCell] = []
        for combo in raw:
            settings = tuple(zip(paths, combo))
            as_map = dict(settings)
            if as_map.get("mpr") == 0 and topo_axis in as_map and as_map[topo_axis] != first_topo:
                continue
            cells.append(SweepCell(len(cells), settings))
        return cells

    def cell_seed(self, cell: SweepCell, rep: int) -> int:
        parts: list[int | str] = ["cell"]
        parts.extend(f"{path}={value}" for path, value in cell.settings)
        parts.extend(("rep", rep))
        return derive_seed(self.seed, *parts)

    def columns(self) -> list[str]:
        return [*(path for path, _ in self.axes), *METRIC_COLUMNS, "seed", "status", "runtime_s"]


def _cell_document(spec_base: dict, settings: Iterable[tuple[str, Any]], seed: int) -> dict:
    doc = cfgmod.effective_document(None)
    doc = cfgmod.merge_document(doc, spec_base)
    for path, value in settings:
        cfgmod.set_value(doc, path, value)
    doc["seed"] = seed
    return doc


def run_cell(task: tuple) -> dict:
    """Run one (cell, replication) and return its result row.

    Top-level and tuple-fed so it can cross a process boundary.  Failures
    are captured into the row's ``status`` column instead of killing the
    sweep; config errors surface the offending key path.
    """
    base, cell, rep, seed = task
    row: dict[str, Any] = {"cell": cell.index, "rep": rep, "seed": seed}
    row.update(dict(cell.settings))
    for name in METRIC_COLUMNS:
        row[name] = ""
    # Wall time differs between identical reruns, which would break the
    # byte-for-byte determinism contract on result tables, so the runtime
    # column records the simulated seconds the cell executed instead.
    row["runtime_s"] = ""
    try:
        scenario = cfgmod.document_to_scenario(_cell_document(base, cell.settings, seed))
        result = run(scenario)
        report = compute_report(
            result.log,
            result.events,
            scenario.corridor,
            scenario.ttc,
            result.beacons_sent,
            result.beacons_delivered,
        )
        row.update(report.csv_values())
        row["status"] = "ok"
        row["runtime_s"] = scenario.duration_s
    except ConfigError as exc:
        row["status"] = f"failed: {exc}"
    except Exception as exc:  # noqa: BLE001 - isolate cells from each other
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def run_sweep(spec: SweepSpec, workers: int = 1, progress=None) -> list[dict]:
    """Execute every (cell, replication), in deterministic row order."""
    cells = spec.expand()
    tasks = [
        (spec.base, cell, rep, spec.cell_seed(cell, rep))
        for cell in cells
        for rep in range(spec.replications)
    ]
    LOG.info("sweep: %d cells x %d reps (%d workers)", len(cells), spec.replications, workers)
    rows: list[dict]
    if workers <= 1:
        rows = []
        for i, task in enumerate(tasks):
            rows.append(run_cell(task))
            if progress:
                progress(i + 1, len(tasks), rows[-1])
    else:
        ctx = get_context("spawn")
        with ctx.Pool(processes=workers) as pool:
            rows = []
            for i, row in enumerate(pool.imap(run_cell, tasks, chunksize=1)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(tasks), row)
    rows.sort(key=lambda r: (r["cell"], r["rep"]))
    return rows


def _format_cell_value(value: Any) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell_value(row.get(col, "")) for col in columns])
    return buf.getvalue()


class Stats(NamedTuple):
    n: int
    mean: float
    sd: float  # sample standard deviation; 0.0 when n < 2
    lo: float
    hi: float


def aggregate(
    rows: Iterable[dict],
    group_by: Sequence[str],
    metrics: Sequence[str] = ("conflicts_total", "collisions", "travel_time_s"),
) -> dict[tuple, dict[str, Stats]]:
    """Per-group summary stats over replications, skipping failed rows.

    Rows with a non-finite metric value (a run that never emptied, say)
    still count toward ``n`` but propagate ``inf`` through the mean.
    """
    buckets: dict[tuple, list[dict]] = {}
    for row in rows:
        if row.get("status") != "ok":
            continue
        key = tuple(row[g] for g in group_by)
        buckets.setdefault(key, []).append(row)
    out: dict[tuple, dict[str, Stats]] = {}
    for key, group in buckets.items():
        summary: dict[str, Stats] = {}
        for name in metrics:
            values = [float(row[name]) for row in group if row.get(name) != ""]
            if not values:
                continue
            mean = sum(values) / len(values) if all(map(math.isfinite, values)) else math.inf
            sd = statistics.stdev(values) if len(values) > 1 and math.isfinite(mean) else 0.0
            summary[name] = Stats(len(values), mean, sd, min(values), max(values))
        out[key] = summary
    return out


def percent_change(value: float, baseline: float) -> float | None:
    """Relative change in percent; None when the baseline is 0 or non-finite."""
    if baseline == 0 or not math.isfinite(baseline) or not math.isfinite(value):
        return None
    return (value - baseline) / baseline * 100.0


def summary_rows(
    rows: Sequence[dict],
    group_by: Sequence[str],
    metrics: Sequence[str] = METRIC_COLUMNS,
) -> tuple[list[str], list[dict]]:
    """Per-group stat rows (columns, rows) in first-appearance group order.

    ``n`` counts only rows with status ok; a group whose every replication
    failed still gets a row, with blank statistics.
    """
    stats = aggregate(rows, group_by, metrics)
    order: list[tuple] = []
    ok_counts: dict[tuple, int] = {}
    for row in rows:
        key = tuple(row[g] for g in group_by)
        if key not in ok_counts:
            order.append(key)
            ok_counts[key] = 0
        if row.get("status") == "ok":
            ok_counts[key] += 1
    columns = [*group_by, "n"]
    for name in metrics:
        columns.extend(f"{name}_{stat}" for stat in ("mean", "sd", "min", "max"))
    out: list[dict] = []
    for key in order:
        row = dict(zip(group_by, key))
        row["n"] = ok_counts[key]
        for name in metrics:
            st = stats.get(key, {}).get(name)
            if st is None:
                row.update({f"{name}_{s}": "" for s in ("mean", "sd", "min", "max")})
            else:
                row[f"{name}_mean"] = st.mean
                row[f"{name}_sd"] = st.sd
                row[f"{name}_min"] = st.lo
                row[f"{name}_max"] = st.hi
        out.append(row)
    return columns, out
