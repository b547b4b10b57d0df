"""Car-following laws.

Two families live here:

* a linear cooperative controller that tracks several preceding vehicles at
  once over V2V, with a constant-time-headway spacing policy scaled by rank
  (the vehicle directly ahead is rank 1, the one before it rank 2, ...), and
* the Intelligent Driver Model for human-driven vehicles.

All functions are pure and operate on scalars; the engine calls them
per vehicle per step, so they are also the single source of truth that
any vectorized path must be checked against.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .core import ConfigError, DegenerateGapError, EmptyViewError, VehicleState


class Topology(enum.Enum):
    """Which upstream vehicles a cooperative controller listens to."""

    PF = "PF"  # predecessor-following: immediate predecessor only
    MPF = "MPF"  # multiple-predecessor-following: nearest max_neighbours


SOURCE_V2V = "v2v"
SOURCE_SENSOR = "sensor"


class ViewEntry(NamedTuple):
    """One leading vehicle as seen by the ego controller."""

    rank: int  # 1 = immediate predecessor
    position: float  # leader rear bumper, m (possibly stale if from V2V)
    speed: float  # m/s (same staleness as position)
    source: str  # SOURCE_V2V or SOURCE_SENSOR
    age: float  # s since the data left the sender


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters.

    Attributes
    ----------
    a : float
        Maximum acceleration, m/s^2.
    b : float
        Comfortable deceleration, m/s^2.
    v_f : float
        Free-flow (desired) speed, m/s.
    s0 : float
        Standstill minimum gap, m.
    T : float
        Desired time headway, s.
    delta : float
        Free-flow exponent; the standard value 4 is kept fixed.
    """

    a: float = 1.4
    b: float = 2.0
    v_f: float = 27.8
    s0: float = 2.0
    T: float = 1.5
    delta: float = 4.0

    def __post_init__(self):
        for name in ("a", "b", "v_f", "s0", "T", "delta"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be > 0")


@dataclass(frozen=True)
class ControllerConfig:
    """Gains and policy of the linear cooperative controller.

    Attributes
    ----------
    alpha : float
        Spacing-error gain, 1/s^2.
    beta : float
        Speed-error gain, 1/s.
    headway_s : float
        Time headway of the spacing policy, s.
    standstill_m : float
        Standstill distance of the spacing policy, m.
    topology : Topology
        PF listens to rank 1 only; MPF to the nearest ``max_neighbours``.
    max_neighbours : int
        Upper bound on simultaneous targets.  The summed command grows with
        the target count, so the cap bounds it on long connected chains;
        the saturation envelope and the catch-up ceiling absorb the rest.
    staleness_s : float
        V2V data older than this is ignored, s.
    sensor_range_m : float
        Forward range of the onboard gap sensor, m.
    mix_sensor_rank1 : bool
        When True the sensed immediate predecessor always occupies rank 1
        and V2V supplies ranks 2 and beyond; when False the controller is
        V2V-only and the sensor serves purely as fallback.
    catchup_factor : float
        Speed ceiling for gap closing, as a multiple of the vehicle's
        free-flow speed.  The linear law has no speed set point of its own,
        so without a ceiling a vehicle chasing a long gap accelerates far
        past any plausible road speed.
    """

    alpha: float = 1.0
    beta: float = 3.0
    headway_s: float = 0.8
    standstill_m: float = 2.0
    topology: Topology = Topology.MPF
    max_neighbours: int = 8
    staleness_s: float = 0.5
    sensor_range_m: float = 120.0
    mix_sensor_rank1: bool = True
    catchup_factor: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha", "must be > 0")
        if self.beta < 0:
            raise ConfigError("beta", "must be >= 0")
        if self.headway_s < 0:
            raise ConfigError("headway_s", "must be >= 0")
        if self.standstill_m <= 0:
            raise ConfigError("standstill_m", "must be > 0")
        if not isinstance(self.topology, Topology):
            raise ConfigError("topology", "must be PF or MPF")
        if self.max_neighbours < 1:
            raise ConfigError("max_neighbours", "must be >= 1")
        if self.staleness_s <= 0:
            raise ConfigError("staleness_s", "must be > 0")
        if self.sensor_range_m < 0:
            raise ConfigError("sensor_range_m", "must be >= 0")
        if self.catchup_factor < 1:
            raise ConfigError("catchup_factor", "must be >= 1")


def desired_distance(rank: int, v: float, cfg: ControllerConfig) -> float:
    """Desired cumulative bumper-to-bumper distance to the rank-k leader.

    The spacing policy is constant-time-headway on the ego speed, scaled by
    rank: ``k * (headway * v + standstill)``.  "Cumulative bumper-to-bumper"
    means the sum of the k successive gaps, excluding the road taken up by
    the k vehicle bodies in between.

    Parameters
    ----------
    rank : int
        Leader rank, >= 1.
    v : float
        Ego speed, m/s, >= 0.
    cfg : ControllerConfig

    Returns
    -------
    float
        Desired distance, m.
    """
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if v < 0:
        raise ValueError(f"speed must be >= 0, got {v}")
    return rank * (cfg.headway_s * v + cfg.standstill_m)


def mpf_accel(ego: VehicleState, view: Sequence[ViewEntry], cfg: ControllerConfig) -> float:
    """Linear multi-predecessor acceleration command.

    Each usable entry j at rank k contributes
    ``alpha * (distance_k - desired_k) + beta * (v_j - v_ego)`` where
    ``distance_k = x_j - x_ego - k * length`` is the cumulative bumper gap
    (the fleet is homogeneous in length, so k body lengths separate the
    rear bumpers beyond the gaps themselves) and ``desired_k`` comes from
    :func:`desired_distance`.  Entries are summed in rank order.

    Under the PF topology only the rank-1 entry is used.

    Raises
    ------
    EmptyViewError
        If no usable entry remains after the topology filter.
    """
    if cfg.topology is Topology.PF:
        usable = [e for e in view if e.rank == 1]
    else:
        usable = list(view)
    if not usable:
        raise EmptyViewError("no usable neighbour entry")
    usable.sort(key=lambda e: e.rank)
    u = 0.0
    for entry in usable:
        distance = entry.position - ego.x - entry.rank * ego.length
        err = distance - desired_distance(entry.rank, ego.v, cfg)
        u += cfg.alpha * err + cfg.beta * (entry.speed - ego.v)
    return u


def fallback_accel(
    ego: VehicleState, sensor_gap: float, sensor_dv: float, cfg: ControllerConfig
) -> float:
    """Sensor-only degradation of the cooperative law.

    Applies the same linear law restricted to a single rank-1 target whose
    state comes from the onboard gap sensor instead of V2V.

    Parameters
    ----------
    sensor_gap : float
        Measured bumper-to-bumper gap to the immediate predecessor, m.
    sensor_dv : float
        Leader speed minus ego speed, m/s (positive when opening).
    """
    if sensor_gap <= 0:
        raise DegenerateGapError(f"non-positive sensor gap {sensor_gap!r}")
    err = sensor_gap - desired_distance(1, ego.v, cfg)
    return cfg.alpha * err + cfg.beta * sensor_dv


def free_drive_accel(v: float, v_f: float, a_max: float) -> float:
    """Acceleration on an empty road: relax toward the free-flow speed."""
    return a_max * (1.0 - (v / v_f) ** 4)


def idm_accel(v: float, gap: float, closing_dv: float, p: IdmParams) -> float:
    """Intelligent Driver Model acceleration.

    Parameters
    ----------
    v : float
        Ego speed, m/s.
    gap : float
        Bumper-to-bumper gap to the leader, m; must be positive.
    closing_dv : float
        Ego speed minus leader speed, m/s (positive when closing in).
    p : IdmParams

    Returns
    -------
    float
        Acceleration, m/s^2 (unsaturated; callers clip to vehicle limits).

    Raises
    ------
    DegenerateGapError
        If ``gap <= 0``; callers treat that as emergency braking.
    """
    if gap <= 0:
        raise DegenerateGapError(f"non-positive gap {gap!r}")
    s_star = p.s0 + max(0.0, v * p.T + v * closing_dv / (2.0 * math.sqrt(p.a * p.b)))
    return p.a * (1.0 - (v / p.v_f) ** p.delta - (s_star / gap) ** 2)
