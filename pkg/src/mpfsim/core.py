"""Ground types shared by every other module.

Conventions
-----------
* Positions are rear-bumper longitudinal coordinates in meters, increasing
  in the driving direction; a vehicle occupies ``[x, x + length]``.
* The bumper gap between a follower and the vehicle directly ahead is
  ``x_leader - x_follower - length_leader``.
* Simulation time is always computed from the integer step count, never
  accumulated, so ``t`` carries no floating drift.
"""

from __future__ import annotations

import enum
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple


class SimulationError(Exception):
    """Base class for everything this package raises on purpose."""


class ConfigError(SimulationError):
    """A configuration value or key is invalid. Carries the key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")

    def with_prefix(self, prefix: str) -> "ConfigError":
        return ConfigError(f"{prefix}.{self.path}" if self.path else prefix, self.message)


class OutOfCorridorError(SimulationError):
    """A position was queried outside the corridor extent."""


class DegenerateGapError(SimulationError):
    """A car-following law was handed a non-positive gap."""


class EmptyViewError(SimulationError):
    """A cooperative controller was invoked with no usable neighbour."""


class VehicleClass(enum.Enum):
    HDV = 0
    CAV = 1


class VehicleState(NamedTuple):
    """Kinematic snapshot of one vehicle (the ego, from a controller's view)."""

    x: float  # rear bumper position, m
    v: float  # speed, m/s
    u: float  # last commanded acceleration after saturation, m/s^2
    length: float  # m


@dataclass(frozen=True)
class VehicleParams:
    """Physical limits of one vehicle.

    Attributes
    ----------
    a_max : float
        Maximum commanded acceleration, m/s^2.
    b_max : float
        Maximum deceleration magnitude (emergency bound), m/s^2.
    v_f : float
        Free-flow (desired) speed, m/s.
    length : float
        Vehicle length, m.
    """

    a_max: float = 2.5
    b_max: float = 6.0
    v_f: float = 27.8
    length: float = 4.0

    def __post_init__(self):
        if self.a_max <= 0:
            raise ConfigError("a_max", "must be > 0")
        if self.b_max <= 0:
            raise ConfigError("b_max", "must be > 0")
        if self.v_f <= 0:
            raise ConfigError("v_f", "must be > 0")
        if self.length <= 0:
            raise ConfigError("length", "must be > 0")


@dataclass(frozen=True)
class SimClock:
    """Fixed-step simulation clock. ``t`` is derived from the step count."""

    k: int = 0
    dt: float = 0.1  # s

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt", "must be > 0")
        if self.k < 0:
            raise ConfigError("k", "must be >= 0")

    @property
    def t(self) -> float:
        return self.k * self.dt

    def advance(self) -> "SimClock":
        return SimClock(self.k + 1, self.dt)


@dataclass(frozen=True)
class Corridor:
    """A single-lane stretch partitioned into contiguous edges.

    ``bounds`` holds the cut points ``(0, c1, ..., L)``; edge ``i`` covers
    ``[bounds[i], bounds[i+1])`` except the last edge, which is closed on the
    right so ``x == L`` still maps to it.
    """

    bounds: tuple[float, ...]

    def __post_init__(self):
        if len(self.bounds) < 2:
            raise ConfigError("bounds", "need at least two cut points")
        if self.bounds[0] != 0.0:
            raise ConfigError("bounds", "must start at 0")
        for a, b in zip(self.bounds, self.bounds[1:]):
            if b <= a:
                raise ConfigError("bounds", "cut points must increase strictly")

    @classmethod
    def uniform(cls, length: float, n_edges: int) -> "Corridor":
        if length <= 0:
            raise ConfigError("length_m", "must be > 0")
        if n_edges < 1:
            raise ConfigError("n_edges", "must be >= 1")
        cuts = tuple(length * i / n_edges for i in range(n_edges)) + (float(length),)
        return cls(cuts)

    @property
    def length(self) -> float:
        return self.bounds[-1]

    @property
    def n_edges(self) -> int:
        return len(self.bounds) - 1

    @property
    def edge_lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.bounds, self.bounds[1:]))

    def edge_of(self, x: float) -> int:
        """Edge index containing position ``x``; right-closed at the exit."""
        if x < 0.0 or x > self.length:
            raise OutOfCorridorError(f"position {x!r} outside [0, {self.length!r}]")
        if x == self.length:
            return self.n_edges - 1
        return bisect_right(self.bounds, x) - 1


def bumper_gap(leader_x: float, leader_length: float, follower_x: float) -> float:
    """Bumper-to-bumper gap between a follower and its leader."""
    return leader_x - follower_x - leader_length
