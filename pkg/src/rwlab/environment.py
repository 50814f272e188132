"""A quenched environment realised lazily as a hash of (seed, t, x)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hashing
from .model import EnvAlphabet, EnvLaw, ModelError


@dataclass(frozen=True)
class QuenchedEnvironment:
    """One fixed realisation of the field.

    ``state_index(t, x)`` hashes ``(seed, TAG_ENV, t, x_1, ..., x_n)`` with
    coordinates zig-zag encoded, maps the hash to [0, 1) and inverts the CDF
    of the law in alphabet order. Nothing is stored; any two queries with the
    same key agree.
    """

    seed: int
    law: EnvLaw
    alphabet: EnvAlphabet
    dim: int

    def __post_init__(self):
        hashing.as_u64(self.seed)
        if len(self.law) != len(self.alphabet):
            raise ModelError("law and alphabet sizes differ")
        if self.dim < 1:
            raise ModelError("dimension must be at least 1")
        cum = np.cumsum(self.law.probs)
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def for_model(cls, model, seed: int) -> QuenchedEnvironment:
        return cls(seed=seed, law=model.law, alphabet=model.alphabet, dim=model.dim)

    def time_prefix(self, t):
        """Hash state after absorbing the time key; reused across sites."""
        return env_prefix(self.seed, t)

    def states_from_prefix(self, prefix, x) -> np.ndarray:
        """State indices for sites ``x`` (shape (..., n)) given a time prefix."""
        x = np.asarray(x, dtype=np.int64)
        h = prefix
        for i in range(self.dim):
            h = hashing.fold(h, hashing.zigzag(x[..., i]))
        return self._invert(hashing.to_unit(h))

    def state_index(self, t, x):
        """Vectorised state lookup; ``x`` has trailing axis of length n."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1:] != (self.dim,):
            raise ModelError(f"site {x.tolist()} is not {self.dim}-dimensional")
        if np.any(np.asarray(t) < 0):
            raise ValueError("time must be nonnegative")
        return self.states_from_prefix(self.time_prefix(t), x)

    def _invert(self, u):
        return invert_cdf(self._cum[:-1], u)


def invert_cdf(thresholds, u):
    """Index ``k`` with ``thresholds[k-1] <= u < thresholds[k]``.

    ``thresholds`` are the partial sums without the final total, so the last
    index absorbs any rounding shortfall of the total below 1.
    """
    if len(thresholds) > 8:
        return np.searchsorted(thresholds, u, side="right")
    k = np.zeros(np.shape(u), dtype=np.intp)
    for c in thresholds:
        k += u >= c
    return k


def env_prefix(seed, t):
    """Hash of ``(seed, TAG_ENV, t)``; ``seed`` may be an array of seeds."""
    h = hashing.hash_keys(seed, hashing.TAG_ENV)
    t = t.astype(np.uint64) if isinstance(t, np.ndarray) else hashing.as_u64(t)
    return hashing.fold(h, t)


def env_state(env: QuenchedEnvironment, t: int, x) -> str:
    """Label of the environment at time ``t``, site ``x``."""
    return env.alphabet.states[int(env.state_index(t, x))]


def env_histogram(env: QuenchedEnvironment, keys) -> np.ndarray:
    """Counts of each state over distinct ``(t, x)`` keys."""
    keys = list(keys)
    counts = np.zeros(len(env.alphabet), dtype=np.int64)
    if not keys:
        return counts
    ts = np.fromiter((t for t, _ in keys), dtype=np.int64, count=len(keys))
    xs = np.array([x for _, x in keys], dtype=np.int64).reshape(len(keys), -1)
    flat = np.column_stack([ts, xs])
    order = np.lexsort(flat.T[::-1])
    srt = flat[order]
    if np.any(np.all(srt[1:] == srt[:-1], axis=1)):
        raise ValueError("duplicate (t, x) keys would bias the histogram")
    idx = env.state_index(ts, xs) if ts.size else np.empty(0, dtype=np.int64)
    return np.bincount(idx, minlength=len(env.alphabet)).astype(np.int64)
