"""Safety and efficiency measures computed from trajectory logs.

Safety is counted as time-to-collision conflict events: for every
follower/leader pair the TTC is evaluated at each logged step, sub-threshold
intervals become events, and near-adjacent intervals are merged so one
drawn-out encounter is not counted many times.  Efficiency is a corridor
travel time assembled from per-edge harmonic mean speeds, plus the plain
per-edge mean speeds themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

from .core import ConfigError, Corridor, VehicleClass

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, engine imports us
    from .engine import Event, TrajectoryLog

EVENT_COLLISION = "collision"


@dataclass(frozen=True)
class TtcConfig:
    """Conflict-detection thresholds, seconds.

    A sample is conflicting when TTC is strictly below the threshold of the
    follower's class.  Conflict intervals of one pair separated by less than
    ``debounce_s`` (last sub-threshold sample to next sub-threshold sample)
    merge into a single event.
    """

    threshold_cav_s: float = 0.75
    threshold_hdv_s: float = 1.5
    debounce_s: float = 1.0

    def __post_init__(self):
        for name in ("threshold_cav_s", "threshold_hdv_s", "debounce_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be > 0")


class ConflictCounts(NamedTuple):
    total: int
    cav: int  # events whose follower is a CAV
    hdv: int  # events whose follower is an HDV


def ttc(leader: tuple[float, float, float], follower: tuple[float, float]) -> float | None:
    """Time to collision between one leader and its follower.

    Parameters
    ----------
    leader : (x, v, length)
    follower : (x, v)

    Returns
    -------
    float or None
        ``gap / (v_follower - v_leader)`` when the follower is closing in;
        ``None`` when it is not (no collision course); ``0.0`` when the gap
        is already non-positive (degenerate: treated as an immediate
        conflict by the counters).
    """
    lx, lv, llen = leader
    fx, fv = follower
    gap = lx - fx - llen
    if gap <= 0:
        return 0.0
    closing = fv - lv
    if closing <= 0:
        return None
    return gap / closing


def count_conflicts(log: "TrajectoryLog", cfg: TtcConfig) -> ConflictCounts:
    """Count debounced TTC conflict events per follower class.

    Pairs are instantaneous follower/leader adjacencies taken from the
    positions in the log; the threshold comparison is strict (a TTC exactly
    at the threshold is not a conflict).
    """
    if log.t.size == 0:
        return ConflictCounts(0, 0, 0)

    step_t, step_of = np.unique(log.t, return_inverse=True)
    order = np.lexsort((-log.x, step_of))
    lead = order[:-1]
    foll = order[1:]
    same_step = step_of[lead] == step_of[foll]
    lead = lead[same_step]
    foll = foll[same_step]
    if lead.size == 0:
        return ConflictCounts(0, 0, 0)

    lead_len = np.fromiter(
        (log.lengths[int(i)] for i in log.vid[lead]), dtype=np.float64, count=lead.size
    )
    gap = log.x[lead] - log.x[foll] - lead_len
    closing = log.v[foll] - log.v[lead]
    with np.errstate(divide="ignore", invalid="ignore"):
        ttc_vals = np.where(gap <= 0, 0.0, np.where(closing > 0, gap / closing, np.inf))
    thresholds = np.where(
        log.vclass[foll] == VehicleClass.CAV.value, cfg.threshold_cav_s, cfg.threshold_hdv_s
    )
    hit = ttc_vals < thresholds
    if not hit.any():
        return ConflictCounts(0, 0, 0)

    # Walk sub-threshold samples pair by pair, merging near-adjacent runs.
    pair_key = (log.vid[foll[hit]].astype(np.int64) << np.int64(32)) | log.vid[lead[hit]].astype(
        np.int64
    )
    hit_steps = step_of[foll[hit]]
    hit_class = log.vclass[foll[hit]]
    by_pair = np.lexsort((hit_steps, pair_key))

    counts = {VehicleClass.CAV.value: 0, VehicleClass.HDV.value: 0}
    prev_key = None
    prev_t = 0.0
    for idx in by_pair:
        key = pair_key[idx]
        t_here = step_t[hit_steps[idx]]
        if key != prev_key:
            counts[int(hit_class[idx])] += 1
        elif t_here - prev_t >= cfg.debounce_s:
            counts[int(hit_class[idx])] += 1
        prev_key = key
        prev_t = t_here
    cav = counts[VehicleClass.CAV.value]
    hdv = counts[VehicleClass.HDV.value]
    return ConflictCounts(cav + hdv, cav, hdv)


def edge_mean_speeds(log: "TrajectoryLog", corridor: Corridor) -> list[float | None]:
    """Time-mean sample speed per edge; ``None`` for edges with no samples."""
    means: list[float | None] = []
    if log.t.size == 0:
        return [None] * corridor.n_edges
    bounds = np.asarray(corridor.bounds)
    idx = np.searchsorted(bounds, log.x, side="right") - 1
    idx = np.clip(idx, 0, corridor.n_edges - 1)  # x == L belongs to the last edge
    counts = np.bincount(idx, minlength=corridor.n_edges)
    sums = np.bincount(idx, weights=log.v, minlength=corridor.n_edges)
    for i in range(corridor.n_edges):
        means.append(float(sums[i] / counts[i]) if counts[i] else None)
    return means


def travel_time(log: "TrajectoryLog", corridor: Corridor) -> float:
    """Corridor travel time: sum over edges of length / mean speed, seconds.

    Edges without samples are excluded (they contribute nothing; the report
    flags them through a ``None`` mean speed).  An edge whose mean speed is
    zero yields an infinite travel time, which is reported as-is.
    """
    means = edge_mean_speeds(log, corridor)
    total = 0.0
    for q, vbar in zip(corridor.edge_lengths, means):
        if vbar is None:
            continue
        if vbar == 0.0:
            return float("inf")
        total += q / vbar
    return total


# Fixed metric column order used by sweep result tables.
METRIC_COLUMNS = (
    "conflicts_total",
    "conflicts_cav",
    "conflicts_hdv",
    "collisions",
    "travel_time_s",
    "delivery_rate",
)


@dataclass
class MetricsReport:
    conflicts_total: int
    conflicts_cav: int
    conflicts_hdv: int
    collisions: int
    travel_time_s: float
    edge_mean_speed: list[float | None]
    delivery_rate: float | None
    beacons_sent: int
    beacons_delivered: int

    def to_json_dict(self) -> dict:
        return {
            "conflicts_total": self.conflicts_total,
            "conflicts_cav": self.conflicts_cav,
            "conflicts_hdv": self.conflicts_hdv,
            "collisions": self.collisions,
            "travel_time_s": self.travel_time_s,
            "edge_mean_speed": self.edge_mean_speed,
            "delivery_rate": self.delivery_rate,
            "beacons_sent": self.beacons_sent,
            "beacons_delivered": self.beacons_delivered,
        }

    def csv_values(self) -> dict[str, object]:
        vals = self.to_json_dict()
        row = {name: vals[name] for name in METRIC_COLUMNS}
        if row["delivery_rate"] is None:
            row["delivery_rate"] = ""
        return row


def compute_report(
    log: "TrajectoryLog",
    events: Sequence["Event"],
    corridor: Corridor,
    cfg: TtcConfig,
    beacons_sent: int,
    beacons_delivered: int,
) -> MetricsReport:
    """Assemble the full report for one run's measured window."""
    conflicts = count_conflicts(log, cfg)
    warmup_steps = round(log.warmup_s / log.dt)
    collisions = sum(1 for e in events if e.kind == EVENT_COLLISION and e.k >= warmup_steps)
    rate = beacons_delivered / beacons_sent if beacons_sent else None
    return MetricsReport(
        conflicts_total=conflicts.total,
        conflicts_cav=conflicts.cav,
        conflicts_hdv=conflicts.hdv,
        collisions=collisions,
        travel_time_s=travel_time(log, corridor),
        edge_mean_speed=edge_mean_speeds(log, corridor),
        delivery_rate=rate,
        beacons_sent=beacons_sent,
        beacons_delivered=beacons_delivered,
    )
