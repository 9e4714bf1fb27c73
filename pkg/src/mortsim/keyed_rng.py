"""Counter-based uniforms keyed by (stream, item).

A stream is derived from integers such as (seed, replicate, year, process);
each agent draws ``uniform(stream, agent_key)``. Draws depend only on the
keys, never on population order or size, so two runs that share a seed
see the same randomness for every agent they have in common.

Algorithm: splitmix64 finalizer over ``stream ^ key``; 53-bit mantissa.
"""

from __future__ import annotations

import numpy as np

ALGORITHM = "splitmix64-keyed/v1"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def key_of(*parts: int) -> int:
    """Fold integers into one 64-bit key."""
    h = 0
    for p in parts:
        h = mix(h ^ (int(p) & _MASK))
    return h


def mix_array(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniforms(stream: int, keys) -> np.ndarray:
    """One uniform in [0, 1) per key."""
    k = np.asarray(keys, dtype=np.uint64) ^ np.uint64(stream)
    return (mix_array(k) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniform(stream: int, key: int) -> float:
    return (mix(stream ^ key) >> 11) * (1.0 / (1 << 53))
