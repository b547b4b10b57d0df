"""Broadcast V2V channel with per-receiver Bernoulli frame loss.

Each connected vehicle broadcasts a beacon carrying its position and speed
at a fixed rate.  Every receiver within range decides delivery by an
independent Bernoulli draw keyed on ``(sender, receiver, beacon index)``,
so the loss pattern of one link never depends on which other vehicles
exist.  Delivered beacons land in per-receiver caches; entries older than
the staleness window are evicted and never reach a controller.

There is no propagation delay or queueing: a delivered beacon is visible
in the same step it was sent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import rng
from .core import ConfigError
from .models import SOURCE_V2V, ControllerConfig, ViewEntry

# Stream tag separating channel draws from every other consumer of the seed.
_CHANNEL_TAG = "v2v-channel"


class Beacon(NamedTuple):
    sender: int
    position: float  # rear bumper at send time, m
    speed: float  # m/s at send time
    sent_at: float  # s


@dataclass(frozen=True)
class ChannelConfig:
    """Broadcast channel parameters.

    Attributes
    ----------
    per : float
        Packet error rate in [0, 1]; each (sender, receiver, beacon) frame
        is lost independently with this probability.
    range_m : float
        Reception range, m (rear-bumper distance, symmetric).
    beacon_hz : float
        Beacon rate, Hz.  The period must be an integer multiple of the
        engine step.
    """

    per: float = 0.0
    range_m: float = 300.0
    beacon_hz: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.per <= 1.0:
            raise ConfigError("per", "must be within [0, 1]")
        if self.range_m <= 0:
            raise ConfigError("range_m", "must be > 0")
        if self.beacon_hz <= 0:
            raise ConfigError("beacon_hz", "must be > 0")

    @property
    def period_s(self) -> float:
        return 1.0 / self.beacon_hz


@dataclass
class NeighbourCache:
    """Latest beacon per sender, as held by one receiver."""

    owner: int
    entries: dict[int, tuple[Beacon, float]] = field(default_factory=dict)
    # entries maps sender id -> (beacon, received_at)


class DeliveryRound(NamedTuple):
    attempted: int  # in-range sender/receiver pairs this beacon step
    delivered: list[tuple[int, int]]  # (sender, receiver) pairs that got through


def broadcast_step(
    senders: Sequence[tuple[int, float, float]],
    receivers: Sequence[tuple[int, float, float]],
    caches: Mapping[int, NeighbourCache],
    cfg: ChannelConfig,
    seed: int,
    beacon_index: int,
    now: float,
) -> DeliveryRound:
    """Broadcast one beacon from every sender and apply deliveries.

    ``senders`` and ``receivers`` are ``(id, position, speed)`` triples from
    the same pre-step snapshot.  A sender never delivers to itself.  The
    delivery draw for a pair depends only on ``(seed, sender id, receiver
    id, beacon_index)``; adding or removing vehicles leaves every other
    pair's outcome untouched.
    """
    if not senders or not receivers:
        return DeliveryRound(0, [])

    s_ids = np.fromiter((s[0] for s in senders), dtype=np.int64, count=len(senders))
    s_x = np.fromiter((s[1] for s in senders), dtype=np.float64, count=len(senders))
    r_ids = np.fromiter((r[0] for r in receivers), dtype=np.int64, count=len(receivers))
    r_x = np.fromiter((r[1] for r in receivers), dtype=np.float64, count=len(receivers))

    in_range = np.abs(s_x[:, None] - r_x[None, :]) <= cfg.range_m
    in_range &= s_ids[:, None] != r_ids[None, :]
    si, ri = np.nonzero(in_range)
    attempted = si.size
    if attempted == 0:
        return DeliveryRound(0, [])

    if cfg.per == 0.0:
        keep = slice(None)
    elif cfg.per >= 1.0:
        return DeliveryRound(attempted, [])
    else:
        draws = rng.uniforms_at(
            rng.derive_seed(seed, _CHANNEL_TAG),
            s_ids[si].astype(np.uint64),
            r_ids[ri].astype(np.uint64),
            beacon_index,
        )
        keep = draws >= cfg.per

    cached_pair = {
        int(i): (Beacon(int(i), float(x), float(v), now), now) for i, x, v in senders
    }
    delivered = list(zip(s_ids[si[keep]].tolist(), r_ids[ri[keep]].tolist()))
    entry_maps = {int(rid): caches[int(rid)].entries for rid in r_ids[np.unique(ri[keep])]}
    for sid, rid in delivered:
        entry_maps[rid][sid] = cached_pair[sid]
    return DeliveryRound(attempted, delivered)


def prune_stale(cache: NeighbourCache, now: float, staleness_s: float) -> NeighbourCache:
    """Drop entries older than the staleness window; idempotent."""
    dead = [s for s, (_, received_at) in cache.entries.items() if now - received_at > staleness_s]
    for s in dead:
        del cache.entries[s]
    return cache


def build_view(
    ego_id: int,
    ego_x: float,
    ego_length: float,
    cache: NeighbourCache,
    ordering: Mapping[int, int],
    cfg: ControllerConfig,
    now: float,
) -> list[ViewEntry]:
    """Assemble the V2V neighbour view of one receiver.

    ``ordering`` maps vehicle id to its ground-truth position index in the
    lane (0 = frontmost); ranks are index differences, so rank counts every
    physically intervening vehicle whether or not it is connected.  Senders
    that left the corridor, fell behind the ego front bumper, or aged past
    the staleness window are skipped.  The result is sorted by rank and
    truncated to the ``max_neighbours`` nearest.
    """
    ego_front = ego_x + ego_length
    ego_ord = ordering[ego_id]
    stale_after = cfg.staleness_s
    lookup = ordering.get
    picked: list[tuple[int, Beacon, float]] = []
    for sender, (beacon, received_at) in cache.entries.items():
        if sender == ego_id:
            continue
        age = now - received_at
        if age > stale_after:
            continue
        sender_ord = lookup(sender)
        if sender_ord is None:
            continue  # sender despawned; cannot rank it
        rank = ego_ord - sender_ord
        if rank < 1:
            continue
        if beacon.position <= ego_front:
            continue
        picked.append((rank, beacon, age))
    picked.sort()  # ranks are unique per receiver, so this orders by rank
    return [
        ViewEntry(rank, beacon.position, beacon.speed, SOURCE_V2V, age)
        for rank, beacon, age in picked[: cfg.max_neighbours]
    ]


def fresh_entry_count(caches: Iterable[NeighbourCache], now: float, staleness_s: float) -> int:
    """Diagnostic: total unexpired entries across caches."""
    return sum(
        1
        for cache in caches
        for (_, received_at) in cache.entries.values()
        if now - received_at <= staleness_s
    )
