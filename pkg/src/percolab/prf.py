"""Counter-based keyed hashing.

Everything random in the package that must be reproducible under lazy
evaluation (edge states, coloring shifts, class groupings) is a pure function
of a 64-bit seed and a structured key.  The scalar functions below work on
Python ints; the ``*_np`` twins apply the same arithmetic to ``uint64`` arrays
and must stay bit-identical to them.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TUPLE_MARK = 0xA5A5 << 32
_INV_2_53 = 1.0 / (1 << 53)

TAG_CODES = {"C": 1, "T": 2, "P": 3, "H": 4, "Q": 5}


def splitmix(z: int) -> int:
    z = (z + _GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def _feed(h: int, obj) -> int:
    if isinstance(obj, bool):
        return splitmix(h ^ int(obj))
    if isinstance(obj, int):
        return splitmix(h ^ (obj & MASK))
    if isinstance(obj, str):
        code = TAG_CODES.get(obj)
        if code is None:
            code = int.from_bytes(hashlib.blake2b(obj.encode(), digest_size=8).digest(), "little")
        return splitmix(h ^ code)
    if isinstance(obj, tuple):
        h = splitmix(h ^ (_TUPLE_MARK | len(obj)))
        for x in obj:
            h = _feed(h, x)
        return h
    raise TypeError(f"cannot hash key component of type {type(obj).__name__}")


def key_hash(obj, h: int = 0) -> int:
    """Hash a nested tuple of ints/strings into 64 bits (seed-free)."""
    return _feed(h, obj)


def seeded(seed: int, *key) -> int:
    """64-bit pseudorandom value for ``key`` under ``seed``."""
    return _feed(splitmix(seed & MASK), key)


def to_unit(h: int) -> float:
    """Map a 64-bit word to [0, 1) through its top 53 bits."""
    return (h >> 11) * _INV_2_53


def edge_word(seed: int, hu: int, hv: int, slot: int) -> int:
    lo, hi = (hu, hv) if hu <= hv else (hv, hu)
    h = splitmix(splitmix(seed & MASK) ^ lo)
    h = splitmix(h ^ hi)
    return splitmix(h ^ slot)


def edge_uniform(seed: int, u, v, slot: int = 0) -> float:
    """Uniform variate attached to the (undirected) edge ``{u, v}`` in ``slot``."""
    return to_unit(edge_word(seed, key_hash(u), key_hash(v), slot))


# ---------------------------------------------------------------- numpy twins


def _u64(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype != np.uint64:
        a = a.astype(np.int64).astype(np.uint64)
    return a


def splitmix_np(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def canopy_hash_np(i, j) -> np.ndarray:
    """Vectorised ``key_hash(("C", i, j))``."""
    i = _u64(i)
    j = _u64(j)
    h = np.full(np.broadcast(i, j).shape, splitmix(_TUPLE_MARK | 3), dtype=np.uint64)
    h = splitmix_np(h ^ np.uint64(TAG_CODES["C"]))
    h = splitmix_np(h ^ i)
    return splitmix_np(h ^ j)


def edge_uniform_np(seed: int, hu: np.ndarray, hv: np.ndarray, slot) -> np.ndarray:
    lo = np.minimum(hu, hv)
    hi = np.maximum(hu, hv)
    h = splitmix_np(np.uint64(splitmix(seed & MASK)) ^ lo)
    h = splitmix_np(h ^ hi)
    h = splitmix_np(h ^ _u64(slot))
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def shuffled(seed: int, items, *key) -> list:
    """Fisher-Yates shuffle driven by :func:`seeded` counters."""
    out = list(items)
    for idx in range(len(out) - 1, 0, -1):
        j = seeded(seed, *key, idx) % (idx + 1)
        out[idx], out[j] = out[j], out[idx]
    return out
