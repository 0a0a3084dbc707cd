"""Counter-based splitmix64 streams.

Every random decision in the forests is ``stream(key, counter)`` for some
derived key, so draws do not depend on call order, trees can be built in any
order (or in parallel), and the compiled and numpy kernels agree exactly.
"""
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
FEATURE_SALT = 0xD1B54A32D192ED03
SUBSPACE_SALT = 0x8CB92BA72F3D8DD7
POISSON_SALT = 0xA24BAED4963EE407

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G = np.uint64(GOLDEN)


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream(key: int, counter: int) -> int:
    return mix64((key + (counter + 1) * GOLDEN) & MASK)


def stream_array(key: int, counters) -> np.ndarray:
    """Vectorised ``stream`` over an array of counters (uint64 wrap-around)."""
    c = np.asarray(counters, dtype=np.uint64)
    z = np.uint64(key & MASK) + (c + np.uint64(1)) * _G
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def to_unit(u) -> np.ndarray:
    """Map 64-bit draws to doubles in [0, 1) using the top 53 bits."""
    return (np.asarray(u, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def tree_key(seed: int, tree_index: int) -> int:
    return mix64((seed ^ tree_index) & MASK)


def ranked_features(key: int, width: int) -> np.ndarray:
    """All feature indices ordered by their random key (ascending)."""
    keys = stream_array(key, np.arange(width, dtype=np.uint64))
    return np.argsort(keys, kind="stable").astype(np.int32)


def node_feature_key(tkey: int, node_id: int) -> int:
    return stream(tkey ^ FEATURE_SALT, node_id)
