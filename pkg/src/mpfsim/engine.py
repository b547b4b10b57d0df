"""Single-lane corridor simulation loop.

Vehicles enter at the upstream end from a Poisson demand process, follow
their class's car-following law down the corridor, and leave at the far
end.  Connected vehicles exchange beacons over the lossy broadcast channel
and run the cooperative linear controller; human-driven vehicles run IDM
against the vehicle directly ahead with a perfect sensor.

Update discipline per step, in order: beacon exchange, control from the
pre-step snapshot (synchronous), command saturation, semi-implicit Euler
integration, collision resolution, despawn, spawn, logging.  The logged
record of a step holds the pre-integration state together with the
saturated command applied over that step.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import IO, NamedTuple, Sequence

import numpy as np

from . import comms, models, rng
from .comms import ChannelConfig, NeighbourCache
from .core import (
    ConfigError,
    Corridor,
    VehicleClass,
    VehicleParams,
    VehicleState,
)
from .metrics import EVENT_COLLISION, TtcConfig
from .models import ControllerConfig, IdmParams, Topology, ViewEntry

LOG = logging.getLogger(__name__)

_CAV = VehicleClass.CAV.value
_HDV = VehicleClass.HDV.value


class InitialVehicle(NamedTuple):
    vclass: VehicleClass
    x: float  # rear bumper, m
    v: float  # m/s


class Event(NamedTuple):
    k: int  # step index at whose end the event was detected
    t: float  # (k + 1) * dt, s
    kind: str
    follower: int
    leader: int


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one run needs. All randomness flows from ``seed``."""

    corridor: Corridor = Corridor.uniform(7000.0, 7)
    dt_s: float = 0.1
    duration_s: float = 2100.0
    warmup_s: float = 300.0
    demand_veh_h: float = 1800.0
    mpr: float = 1.0
    seed: int = 0
    channel: ChannelConfig = ChannelConfig()
    controller: ControllerConfig = ControllerConfig()
    idm: IdmParams = IdmParams()
    vehicle: VehicleParams = VehicleParams()
    ttc: TtcConfig = TtcConfig()
    initial_vehicles: tuple[InitialVehicle, ...] = ()

    def __post_init__(self):
        if self.dt_s <= 0:
            raise ConfigError("dt_s", "must be > 0")
        if self.duration_s <= 0:
            raise ConfigError("duration_s", "must be > 0")
        if not 0 <= self.warmup_s < self.duration_s:
            raise ConfigError("warmup_s", "must satisfy 0 <= warmup < duration")
        for name, value in (("duration_s", self.duration_s), ("warmup_s", self.warmup_s)):
            if abs(round(value / self.dt_s) - value / self.dt_s) > 1e-9:
                raise ConfigError(name, "must be an integer multiple of dt_s")
        period = self.channel.period_s / self.dt_s
        if abs(round(period) - period) > 1e-9 or round(period) < 1:
            raise ConfigError(
                "channel.beacon_hz", "beacon period must be a positive multiple of dt_s"
            )
        if not 0.0 <= self.mpr <= 1.0:
            raise ConfigError("mpr", "must be within [0, 1]")
        if self.demand_veh_h < 0:
            raise ConfigError("demand_veh_h", "must be >= 0")
        for i, iv in enumerate(self.initial_vehicles):
            if not 0.0 <= iv.x <= self.corridor.length:
                raise ConfigError(f"initial_vehicles[{i}].x_m", "outside the corridor")
            if iv.v < 0:
                raise ConfigError(f"initial_vehicles[{i}].v_mps", "must be >= 0")

    @property
    def n_steps(self) -> int:
        return round(self.duration_s / self.dt_s)

    @property
    def warmup_steps(self) -> int:
        return round(self.warmup_s / self.dt_s)

    @property
    def beacon_every(self) -> int:
        return round(self.channel.period_s / self.dt_s)


@dataclass
class TrajectoryLog:
    """Columnar per-vehicle per-step records of the measured window."""

    t: np.ndarray  # float64, s
    vid: np.ndarray  # int64
    vclass: np.ndarray  # int8, VehicleClass values
    x: np.ndarray  # float64, m
    v: np.ndarray  # float64, m/s
    u: np.ndarray  # float64, m/s^2 (saturated command)
    rank: np.ndarray  # int32 position index within the step, 0 = frontmost
    dt: float
    warmup_s: float
    lengths: dict[int, float]

    @property
    def n_records(self) -> int:
        return int(self.t.size)

    def to_csv(self, buf: IO[str]) -> None:
        buf.write("t,id,class,x,v,u,rank\n")
        names = {_HDV: VehicleClass.HDV.name, _CAV: VehicleClass.CAV.name}
        for i in range(self.t.size):
            buf.write(
                f"{self.t[i]!r},{self.vid[i]},{names[int(self.vclass[i])]},"
                f"{self.x[i]!r},{self.v[i]!r},{self.u[i]!r},{self.rank[i]}\n"
            )


def write_events_csv(events: Sequence[Event], buf: IO[str]) -> None:
    buf.write("t,type,id_follower,id_leader\n")
    for e in events:
        buf.write(f"{e.t!r},{e.kind},{e.follower},{e.leader}\n")


@dataclass
class RunResult:
    log: TrajectoryLog
    events: list[Event]
    beacons_sent: int  # in-range transmission opportunities, measured window
    beacons_delivered: int
    config: ScenarioConfig


class _World:
    """Mutable state of one running scenario (arrays sorted front-first)."""

    __slots__ = (
        "cfg",
        "ids",
        "cls",
        "x",
        "v",
        "u_prev",
        "caches",
        "queue",
        "next_id",
        "arrival_count",
        "next_arrival_t",
        "demand_rng",
        "class_seed",
        "events",
        "sent",
        "delivered",
        "buffers",
    )

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.ids = np.empty(0, dtype=np.int64)
        self.cls = np.empty(0, dtype=np.int8)
        self.x = np.empty(0, dtype=np.float64)
        self.v = np.empty(0, dtype=np.float64)
        self.u_prev = np.empty(0, dtype=np.float64)
        self.caches: dict[int, NeighbourCache] = {}
        self.queue: deque[VehicleClass] = deque()
        self.next_id = 0
        self.arrival_count = 0
        self.demand_rng = rng.substream(cfg.seed, "demand")
        self.class_seed = rng.derive_seed(cfg.seed, "vehicle-class")
        if cfg.demand_veh_h > 0:
            self.next_arrival_t = float(
                self.demand_rng.exponential(3600.0 / cfg.demand_veh_h)
            )
        else:
            self.next_arrival_t = math.inf
        self.events: list[Event] = []
        self.sent = 0
        self.delivered = 0
        self.buffers: list[tuple] = []

    def insert(self, vclass: VehicleClass, at_x: float, speed: float) -> int:
        """Append one vehicle at the rear of the sorted arrays."""
        vid = self.next_id
        self.next_id += 1
        self.ids = np.concatenate([self.ids, [vid]])
        self.cls = np.concatenate([self.cls, [np.int8(vclass.value)]])
        self.x = np.concatenate([self.x, [at_x]])
        self.v = np.concatenate([self.v, [speed]])
        self.u_prev = np.concatenate([self.u_prev, [0.0]])
        if vclass is VehicleClass.CAV:
            self.caches[vid] = NeighbourCache(vid)
        return vid


def _idm_accel_array(
    v: np.ndarray, gap: np.ndarray, closing_dv: np.ndarray, p: IdmParams, b_max: float
) -> np.ndarray:
    """Vectorized IDM for follower rows; non-positive gaps brake at -b_max.

    Must stay element-wise identical to :func:`mpfsim.models.idm_accel`
    (the engine test suite asserts the parity).
    """
    sqrt_ab = math.sqrt(p.a * p.b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_star = p.s0 + np.maximum(0.0, v * p.T + v * closing_dv / (2.0 * sqrt_ab))
        acc = p.a * (1.0 - (v / p.v_f) ** p.delta - (s_star / gap) ** 2)
    return np.where(gap <= 0, -b_max, acc)


def _cav_command(
    world: _World,
    i: int,
    gap_pred: float | None,
    v_pred: float | None,
    ordering: dict[int, int],
    t: float,
) -> float:
    """Control command of the CAV at sorted index ``i`` (pre-saturation)."""
    cfg = world.cfg
    ctrl = cfg.controller
    length = cfg.vehicle.length
    ego_v = float(world.v[i])

    if gap_pred is not None and gap_pred <= 0:
        return -cfg.vehicle.b_max  # overlapping its predecessor: emergency

    vid = int(world.ids[i])
    view = comms.build_view(
        vid, float(world.x[i]), length, world.caches[vid], ordering, ctrl, t
    )
    # The rank-scaled spacing target presumes every vehicle between ego and
    # the sender also regulates h*v+d gaps.  An HDV in between holds its own
    # (larger) IDM gap instead, and summing terms across it would pull the
    # ego onto the HDV's bumper.  So entries beyond the first unequipped
    # predecessor are unusable and the CAV degrades toward sensor following.
    if view:
        cls = world.cls
        horizon = min(ctrl.max_neighbours, i)
        first_hdv = horizon + 1
        for r in range(1, horizon + 1):
            if cls[i - r] == _HDV:
                first_hdv = r
                break
        view = [e for e in view if e.rank < first_hdv]
    sensed = gap_pred is not None and gap_pred <= ctrl.sensor_range_m
    if sensed and ctrl.mix_sensor_rank1:
        assert v_pred is not None
        sensor_entry = ViewEntry(
            1, float(world.x[i - 1]), v_pred, models.SOURCE_SENSOR, 0.0
        )
        view = [sensor_entry] + [e for e in view if e.rank >= 2]
        view = view[: ctrl.max_neighbours]

    usable = bool(view)
    if usable and ctrl.topology is Topology.PF:
        usable = any(e.rank == 1 for e in view)
    ego = VehicleState(float(world.x[i]), ego_v, float(world.u_prev[i]), length)
    if usable:
        u = models.mpf_accel(ego, view, ctrl)
    elif sensed:
        assert gap_pred is not None and v_pred is not None
        u = models.fallback_accel(ego, gap_pred, v_pred - ego_v, ctrl)
    else:
        u = models.free_drive_accel(ego_v, cfg.vehicle.v_f, cfg.vehicle.a_max)
    # The gap terms carry no speed set point, so a vehicle closing a long
    # gap would otherwise overshoot any plausible road speed.  Cap the
    # post-step speed at catchup_factor times free flow.
    return min(u, (ctrl.catchup_factor * cfg.vehicle.v_f - ego_v) / cfg.dt_s)


def _step(world: _World, k: int) -> None:
    cfg = world.cfg
    dt = cfg.dt_s
    t = k * dt
    length = cfg.vehicle.length
    n = world.ids.size

    # 1. Beacon exchange and cache pruning.
    if n and k % cfg.beacon_every == 0:
        cav_rows = np.nonzero(world.cls == _CAV)[0]
        if cav_rows.size:
            cavs = list(
                zip(
                    world.ids[cav_rows].tolist(),
                    world.x[cav_rows].tolist(),
                    world.v[cav_rows].tolist(),
                )
            )
            outcome = comms.broadcast_step(
                cavs, cavs, world.caches, cfg.channel, cfg.seed, k // cfg.beacon_every, t
            )
            if k >= cfg.warmup_steps:
                world.sent += outcome.attempted
                world.delivered += len(outcome.delivered)
        # Views filter by age themselves; pruning is memory hygiene, so a
        # coarse cadence (once a second) is enough.
        if k % max(1, round(1.0 / cfg.dt_s)) == 0:
            for cache in world.caches.values():
                comms.prune_stale(cache, t, cfg.controller.staleness_s)

    # 2. Control from the pre-step snapshot.
    u_new = np.zeros(n)
    if n:
        gaps = world.x[:-1] - world.x[1:] - length if n > 1 else np.empty(0)
        hdv_rows = np.nonzero(world.cls == _HDV)[0]
        if hdv_rows.size:
            followers = hdv_rows[hdv_rows > 0]
            if followers.size:
                u_new[followers] = _idm_accel_array(
                    world.v[followers],
                    gaps[followers - 1],
                    world.v[followers] - world.v[followers - 1],
                    cfg.idm,
                    cfg.vehicle.b_max,
                )
            if hdv_rows[0] == 0:
                u_new[0] = cfg.idm.a * (
                    1.0 - (world.v[0] / cfg.idm.v_f) ** cfg.idm.delta
                )
        cav_rows = np.nonzero(world.cls == _CAV)[0]
        if cav_rows.size:
            ordering = {int(vid): pos for pos, vid in enumerate(world.ids)}
            for i in cav_rows:
                i = int(i)
                gap_pred = float(gaps[i - 1]) if i > 0 else None
                v_pred = float(world.v[i - 1]) if i > 0 else None
                u_new[i] = _cav_command(world, i, gap_pred, v_pred, ordering, t)

        # 3. Saturation to per-vehicle command limits.
        a_top = np.where(world.cls == _CAV, cfg.vehicle.a_max, cfg.idm.a)
        u_new = np.clip(u_new, -cfg.vehicle.b_max, a_top)

        # Capture the record before integration mutates anything.
        if k >= cfg.warmup_steps:
            world.buffers.append(
                (
                    np.full(n, t),
                    world.ids,
                    world.cls,
                    world.x,
                    world.v,
                    u_new,
                    np.arange(n, dtype=np.int32),
                )
            )

        # 4. Semi-implicit Euler.
        world.v = np.maximum(0.0, world.v + u_new * dt)
        world.x = world.x + world.v * dt
        world.u_prev = u_new

        # 5. Collision resolution, front to back.
        if n > 1 and np.any(world.x[:-1] - world.x[1:] - length < 0):
            for i in range(1, n):
                if world.x[i - 1] - world.x[i] - length < 0:
                    world.events.append(
                        Event(
                            k,
                            (k + 1) * dt,
                            EVENT_COLLISION,
                            int(world.ids[i]),
                            int(world.ids[i - 1]),
                        )
                    )
                    world.x[i] = world.x[i - 1] - length
                    world.v[i] = world.v[i - 1]

        # 6. Despawn past the corridor exit.
        gone = int(np.searchsorted(-world.x, -cfg.corridor.length, side="left"))
        if gone:
            for vid in world.ids[:gone]:
                world.caches.pop(int(vid), None)
            world.ids = world.ids[gone:]
            world.cls = world.cls[gone:]
            world.x = world.x[gone:]
            world.v = world.v[gone:]
            world.u_prev = world.u_prev[gone:]

    # 7. Demand arrivals and entry.
    while world.next_arrival_t <= (k + 1) * dt:
        u01 = rng.uniform_at(world.class_seed, world.arrival_count)
        world.queue.append(VehicleClass.CAV if u01 < cfg.mpr else VehicleClass.HDV)
        world.arrival_count += 1
        world.next_arrival_t += float(
            world.demand_rng.exponential(3600.0 / cfg.demand_veh_h)
        )
    if world.queue:
        vclass = world.queue[0]
        v_free = cfg.idm.v_f if vclass is VehicleClass.HDV else cfg.vehicle.v_f
        if world.ids.size == 0:
            world.queue.popleft()
            world.insert(vclass, 0.0, v_free)
        else:
            speed = min(v_free, float(world.v[-1]))
            # A human driver waits for a near-equilibrium opening before
            # rolling on, so an HDV is held until the gap covers its
            # time-headway spacing at the entry speed.  A CAV is admitted as
            # soon as the standstill margin is clear; working off the
            # resulting deficit is the controller's job, and those recoveries
            # stand in for merge perturbations on this single-lane corridor.
            if vclass is VehicleClass.HDV:
                safe_gap = cfg.idm.s0 + cfg.idm.T * speed
            else:
                safe_gap = cfg.controller.standstill_m
            if world.x[-1] - length >= safe_gap:
                world.queue.popleft()
                world.insert(vclass, 0.0, speed)


def run(cfg: ScenarioConfig) -> RunResult:
    """Execute one scenario and return its measured-window log and events."""
    world = _World(cfg)

    if cfg.initial_vehicles:
        placed = sorted(cfg.initial_vehicles, key=lambda iv: -iv.x)
        for prev, here in zip(placed, placed[1:]):
            if prev.x - here.x - cfg.vehicle.length < 0:
                raise ConfigError("initial_vehicles", "placements overlap")
        for iv in placed:
            world.insert(iv.vclass, iv.x, iv.v)

    LOG.debug(
        "run: %d steps, %.0f m corridor, demand %.0f veh/h, mpr %.2f, seed %d",
        cfg.n_steps,
        cfg.corridor.length,
        cfg.demand_veh_h,
        cfg.mpr,
        cfg.seed,
    )
    for k in range(cfg.n_steps):
        _step(world, k)

    if world.buffers:
        cols = list(zip(*world.buffers))
        log = TrajectoryLog(
            t=np.concatenate(cols[0]),
            vid=np.concatenate(cols[1]),
            vclass=np.concatenate(cols[2]),
            x=np.concatenate(cols[3]),
            v=np.concatenate(cols[4]),
            u=np.concatenate(cols[5]),
            rank=np.concatenate(cols[6]),
            dt=cfg.dt_s,
            warmup_s=cfg.warmup_s,
            lengths={},
        )
    else:
        empty = np.empty(0)
        log = TrajectoryLog(
            t=empty,
            vid=np.empty(0, dtype=np.int64),
            vclass=np.empty(0, dtype=np.int8),
            x=empty.copy(),
            v=empty.copy(),
            u=empty.copy(),
            rank=np.empty(0, dtype=np.int32),
            dt=cfg.dt_s,
            warmup_s=cfg.warmup_s,
            lengths={},
        )
    log.lengths = {int(vid): cfg.vehicle.length for vid in range(world.next_id)}
    return RunResult(
        log=log,
        events=world.events,
        beacons_sent=world.sent,
        beacons_delivered=world.delivered,
        config=cfg,
    )
