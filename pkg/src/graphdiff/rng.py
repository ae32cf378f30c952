"""Counter-based seeded randomness.

All randomness in the pipeline flows from one documented construction so a
test case is reproducible from (seed, pattern layout) in any language:

    mix(z)       = splitmix64 finalizer:
                   z += 0x9E3779B97F4A7C15            (mod 2^64)
                   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                   z =  z ^ (z >> 31)
    key(parts)   = fold over parts p of k -> mix(k ^ mix(p)), k0 = seed
    u64(key, i)  = mix(key + i * 0x9E3779B97F4A7C15)  (counter i = 0, 1, ...)
    unit(key, i) = (u64(key, i) >> 11) * 2^-53        (float64 in [0, 1))

Per-(node, param) tensor fills use key(seed, CH_TENSOR, node_id, param_ordinal);
record picks, dropout masks and perturbation signs use their own channels.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)

# Channel tags keep unrelated streams disjoint.
CH_TENSOR = 0x01
CH_RECORD = 0x02
CH_DROPOUT = 0x03
CH_PERTURB = 0x04
CH_CASE = 0x05


def _mix_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wraparound is the algorithm
        z = (z + _GOLDEN) & _MASK
        z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
        z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
        return z ^ (z >> np.uint64(31))


def mix(z: int) -> int:
    return int(_mix_array(np.uint64(z & 0xFFFFFFFFFFFFFFFF)))


def derive_key(seed: int, *parts: int) -> int:
    k = seed & 0xFFFFFFFFFFFFFFFF
    for p in parts:
        k = mix(k ^ mix(p & 0xFFFFFFFFFFFFFFFF))
    return k


def u64_stream(key: int, start: int, count: int) -> np.ndarray:
    """Counters start..start+count-1 of the stream, as uint64."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = (np.uint64(key) + idx * _GOLDEN) & _MASK
    return _mix_array(state)


def unit_stream(key: int, start: int, count: int) -> np.ndarray:
    """float64 values in [0, 1)."""
    return (u64_stream(key, start, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def pick_index(key: int, n: int) -> int:
    """Uniform index in [0, n) from counter 0 of the stream."""
    if n <= 0:
        raise ValueError("cannot pick from an empty collection")
    return int(u64_stream(key, 0, 1)[0] % np.uint64(n))


def sign_stream(key: int, count: int) -> np.ndarray:
    """+1.0 / -1.0 from the low bit of each draw."""
    bits = u64_stream(key, 0, count) & np.uint64(1)
    return np.where(bits == 1, 1.0, -1.0)
