"""Counter-based random streams keyed by (seed, path, stream, counter).

Every random number in a simulation is a pure function of its coordinates::

    key(seed, path, stream) = mix(mix(seed + GOLDEN * (path + 1)) ^ (STREAM * stream))
    word(counter)           = mix(key + GOLDEN * (counter + 1))

where ``mix`` is the SplitMix64 finaliser and all arithmetic wraps modulo
2**64. For fixed ``(seed, path, stream)`` the words are consecutive outputs of
a SplitMix64 generator started at ``key``. Because nothing depends on which
worker or chunk evaluates a path, serial and parallel runs agree bit-for-bit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STREAM = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

BROWNIAN, ARRIVAL, SEVERITY = 0, 1, 2


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed: int, paths: np.ndarray, stream: int) -> np.ndarray:
    base = np.uint64(int(seed) & _MASK)
    idx = np.asarray(paths, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        k = mix64(base + GOLDEN * idx)
        return mix64(k ^ (STREAM * np.uint64(stream)))


def words(keys: np.ndarray, counter) -> np.ndarray:
    """64-bit words at ``counter`` (scalar or array broadcast against ``keys``)."""
    c = np.asarray(counter, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        return mix64(keys + GOLDEN * c)


def uniforms(keys: np.ndarray, counter) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53 random bits."""
    w = words(keys, counter)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(keys: np.ndarray, counter) -> np.ndarray:
    """Standard normals by inversion of the uniforms."""
    return ndtri(uniforms(keys, counter))
