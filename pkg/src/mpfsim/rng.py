"""Deterministic seed derivation and counter-based random substreams.

Every stochastic decision in a simulation is keyed by a tuple
``(master seed, stream tag, counter, ...)`` instead of being drawn from one
shared sequential generator.  Two properties follow:

* adding or removing a consumer (a vehicle, a link, a sweep cell) never
  shifts the draws seen by any other consumer, and
* any single draw can be recomputed in isolation, so reruns are
  byte-identical regardless of execution order or worker count.

The mixing function is the SplitMix64 finalizer (the published avalanche
constants below).  NEVER use Python's built-in ``hash()`` for any of this:
it is salted per process and would silently break reproducibility.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15  # 2**64 / golden ratio, the SplitMix64 gamma
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV = 0x100000001B3
_BASE = 0x8BADF00D5EEDC0DE


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer (scalar, pure Python)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fold(part: int | str) -> int:
    """Map a key component to a 64-bit integer. Strings go through crc32."""
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & _MASK64
    return int(part) & _MASK64


def derive_seed(master: int, *parts: int | str) -> int:
    """Derive a 64-bit subseed from a master seed and a key path.

    The same ``(master, parts)`` tuple always yields the same subseed;
    distinct tuples yield (with overwhelming probability) distinct,
    statistically independent subseeds.
    """
    h = mix64(_BASE ^ _fold(master))
    for part in parts:
        h = mix64(((h ^ _fold(part)) * _FNV + _GOLDEN) & _MASK64)
    return h


def substream(master: int, *parts: int | str) -> np.random.Generator:
    """A numpy Generator seeded from a derived subseed (for named streams)."""
    return np.random.default_rng(derive_seed(master, *parts))


def uniform_at(seed: int, *counters: int) -> float:
    """Counter-based uniform draw in [0, 1) for one key tuple (scalar)."""
    return derive_seed(seed, *counters) / 2.0**64


def uniforms_at(
    seed: int,
    a: np.ndarray,
    b: np.ndarray,
    counter: int,
) -> np.ndarray:
    """Vectorized counter-based uniforms in [0, 1), one per (a[i], b[i]).

    Bit-identical to ``uniform_at(seed, a[i], b[i], counter)`` element-wise;
    the scalar and array paths share the same constants and operation order.
    """
    h0 = mix64(_BASE ^ _fold(seed))
    ha = np.asarray(a, dtype=np.uint64)
    hb = np.asarray(b, dtype=np.uint64)
    h = _vec_round(np.uint64(h0) ^ ha)
    h = _vec_round(h ^ hb)
    h = _vec_round(h ^ np.uint64(counter & _MASK64))
    return h / np.float64(2.0**64)


def _vec_round(h: np.ndarray) -> np.ndarray:
    """One chain round: FNV multiply, gamma add, SplitMix64 finalizer."""
    h = h * np.uint64(_FNV) + np.uint64(_GOLDEN)
    h = (h ^ (h >> np.uint64(30))) * np.uint64(_MIX1)
    h = (h ^ (h >> np.uint64(27))) * np.uint64(_MIX2)
    return h ^ (h >> np.uint64(31))
