"""Stateless 64-bit mixing used for every random quantity in the package.

``mix64`` is the SplitMix64 finalizer (Steele, Lea & Flood 2014; constants
from Stafford's "Mix13" variant). It is a bijection on 64-bit words and each
input bit flips every output bit with probability close to 1/2.

A key sequence ``(k1, k2, ...)`` is folded into a seed by

    h = mix64(seed)
    h = mix64((h + GAMMA) ^ (k_i * ODD))    for each key in order

All arithmetic is modulo 2**64. Signed keys are zig-zag encoded first
(0, -1, 1, -2, ... -> 0, 1, 2, 3, ...), so every integer is a valid key.
The functions broadcast over numpy arrays so a whole ensemble can be keyed
in one call.
"""

import numpy as np

MASK = (1 << 64) - 1
GAMMA = np.uint64(0x9E3779B97F4A7C15)
ODD = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S11 = np.uint64(11)

# stream tags keep independent uses of the same seed apart
TAG_ENV = 0x454E56
TAG_WALKER = 0x57414C4B
TAG_STEP = 0x53544550
TAG_ANNEAL = 0x414E4E
TAG_JITTER = 0x4A4954


def as_u64(x):
    """Coerce a nonnegative integer (or array of them) to uint64."""
    if isinstance(x, np.ndarray):
        return x.astype(np.uint64, copy=False)
    x = int(x)
    if not 0 <= x <= MASK:
        raise ValueError(f"seed {x} does not fit in 64 unsigned bits")
    return np.uint64(x)


def zigzag(x):
    """Map signed int64 values bijectively onto uint64."""
    x = np.asarray(x, dtype=np.int64)
    return ((x << 1) ^ (x >> 63)).view(np.uint64) if x.ndim else np.uint64(
        ((int(x) << 1) ^ (int(x) >> 63)) & MASK
    )


def mix64(z):
    with np.errstate(over="ignore"):
        if isinstance(z, np.ndarray) and z.ndim:
            return _mix64_inplace(z.copy())
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def _mix64_inplace(z):
    z ^= z >> _S30
    z *= _M1
    z ^= z >> _S27
    z *= _M2
    z ^= z >> _S31
    return z


def fold(h, key):
    """Absorb one already-unsigned key into hash state ``h``."""
    with np.errstate(over="ignore"):
        z = h + GAMMA
        if isinstance(z, np.ndarray) and z.ndim:
            z ^= key * ODD
            return _mix64_inplace(z)
        z = z ^ (key * ODD)
        if isinstance(z, np.ndarray) and z.ndim:
            return _mix64_inplace(z)
        return mix64(z)


def hash_keys(seed, *keys, signed=False):
    """Hash ``seed`` followed by ``keys``; keys may be arrays (broadcast)."""
    h = mix64(as_u64(seed))
    for k in keys:
        k = zigzag(k) if signed else (
            np.asarray(k).astype(np.uint64) if isinstance(k, np.ndarray) else as_u64(k)
        )
        h = fold(h, k)
    return h


def to_unit(h):
    """Top 53 bits of a hash as a double in [0, 1)."""
    return (h >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)
