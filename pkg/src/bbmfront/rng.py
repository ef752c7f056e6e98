"""Counter-based splittable random streams.

Every stochastic routine in this package draws from keyed streams of the form
``value(key, counter) = finalize(key + counter * GOLDEN)`` where ``finalize``
is the splitmix64 output permutation.  A stream key is a 64-bit integer
derived by hashing a master seed together with a task label and an index
(path index, replicate index, particle lineage).  Because a draw depends only
on (key, counter), results are independent of scheduling: any worker count,
any shard layout, and either compute backend consume identical randomness.

The scalar helpers here operate on plain Python ints (masked to 64 bits) and
are the reference semantics; `bbmfront.kernels` reimplements the same
arithmetic for numba scalars and numpy uint64 arrays.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# offsets used to derive the two child streams of a branching particle
CHILD_A = 0x6A09E667F3BCC909
CHILD_B = 0xB2F8A3D737D90D2B

_U53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _MIX1) & MASK64
    z ^= z >> 27
    z = (z * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    """Fold integers (seed, task label, indices) into a 64-bit stream key."""
    k = 0x8C4F2D90D2B61A35
    for p in parts:
        k = mix64((k ^ mix64((int(p) + GOLDEN) & MASK64)) + GOLDEN)
    return k


def label(name: str) -> int:
    """Stable 64-bit label for a task name, usable as a derive_key part."""
    k = 0xC2B2AE3D27D4EB4F
    for ch in name.encode("utf-8"):
        k = mix64((k ^ ch) + GOLDEN)
    return k


def raw(key: int, ctr: int) -> int:
    return mix64((key + ctr * GOLDEN) & MASK64)


def uniform(key: int, ctr: int) -> float:
    """Uniform draw in (0, 1), exactly ((raw >> 11) + 0.5) * 2**-53."""
    return ((raw(key, ctr) >> 11) + 0.5) * _U53


def normal(key: int, ctr: int) -> float:
    """Standard normal from counters (ctr, ctr+1) via the Box-Muller cosine."""
    u1 = uniform(key, ctr)
    u2 = uniform(key, ctr + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def exponential(key: int, ctr: int, rate: float = 1.0) -> float:
    if rate <= 0.0:
        return np.inf
    return -np.log(uniform(key, ctr)) / rate


def child_keys(key: int) -> tuple[int, int]:
    """Stream keys for the two offspring of a branching particle."""
    return mix64((key + CHILD_A) & MASK64), mix64((key + CHILD_B) & MASK64)


# ---------------------------------------------------------------------------
# vectorized forms (numpy uint64); used by the pure-numpy kernel backend

_GOLD_U64 = np.uint64(GOLDEN)
_M1_U64 = np.uint64(_MIX1)
_M2_U64 = np.uint64(_MIX2)


def mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1_U64
        z = z ^ (z >> np.uint64(27))
        z = z * _M2_U64
        return z ^ (z >> np.uint64(31))


def uniform_array(keys: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    """Vectorized uniform(key, ctr); keys/ctrs broadcast as uint64 arrays."""
    with np.errstate(over="ignore"):
        r = mix64_array(keys + ctrs * _GOLD_U64)
    return ((r >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def normal_array(keys: np.ndarray, ctrs: np.ndarray) -> np.ndarray:
    u1 = uniform_array(keys, ctrs)
    u2 = uniform_array(keys, ctrs + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def keys_for_range(seed: int, task: str, start: int, count: int) -> np.ndarray:
    """uint64 stream keys for items start..start+count of a named task."""
    base = derive_key(seed, label(task))
    idx = np.arange(start, start + count, dtype=np.uint64)
    k = (np.uint64(base) ^ mix64_array(idx + _GOLD_U64)) + _GOLD_U64
    return mix64_array(k)
