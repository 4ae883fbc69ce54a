"""Counter-based random streams.

Every draw is a pure function of a tuple of integer keys, hashed with the
SplitMix64 finaliser. This lets dataset samples and minibatch indices be
regenerated in O(1) per value, in any order, without materialising a
dataset.

Layout of a draw: ``mix(mix(mix(key0) + key1) + key2 ...)``, each ``mix``
being SplitMix64 applied to a 64-bit word (wrapping arithmetic). Uniforms
use the top 53 bits; normals use Box-Muller on two consecutive uniforms.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _mix_int(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash_keys(*keys):
    """Hash a sequence of integer keys (scalars or broadcastable arrays).

    Leading scalar keys are folded with Python integers; numpy takes over at
    the first array key.
    """
    if not isinstance(keys[0], (int, np.integer)):
        out = splitmix64(np.asarray(keys[0]).astype(np.uint64))
        rest = keys[1:]
    else:
        h = _mix_int(int(keys[0]) & _MASK64)
        rest = keys[1:]
        while rest and isinstance(rest[0], (int, np.integer)):
            h = _mix_int((h + int(rest[0])) & _MASK64)
            rest = rest[1:]
        out = np.atleast_1d(np.uint64(h))
    for key in rest:
        out = splitmix64(out + np.asarray(key).astype(np.uint64))
    return out


def to_unit(h):
    """Map uint64 hashes to floats in [0, 1)."""
    return (h >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform(*keys):
    return to_unit(hash_keys(*keys))


def normal_pair(u1, u2):
    """Box-Muller transform; ``u1`` in [0, 1) is mapped to (0, 1]."""
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
