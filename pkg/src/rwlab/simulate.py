"""Monte Carlo walkers in a shared (quenched) or per-walker (annealed) environment.

Randomness is counter based. Walker ``w`` of an ensemble gets the seed
``hash(master_seed, TAG_WALKER, w)`` and its draw at step ``r`` is
``hash(walker_seed, TAG_STEP, r)`` mapped to [0, 1). No generator state is
carried between steps, so splitting walkers across workers cannot change any
result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import hashing
from .environment import QuenchedEnvironment, env_prefix
from .model import Model

MODES = ("quenched", "annealed")


@dataclass(frozen=True)
class WalkPath:
    x0: np.ndarray
    steps: np.ndarray  # (T, n) displacements
    b: np.ndarray

    @property
    def T(self) -> int:
        return len(self.steps)

    @property
    def positions(self) -> np.ndarray:
        """X_0, ..., X_T as an integer array of shape (T + 1, n)."""
        return self.x0 + np.vstack(
            [np.zeros((1, len(self.x0)), dtype=np.int64), np.cumsum(self.steps, axis=0)]
        )

    @property
    def centered(self) -> np.ndarray:
        """Y_r = X_r - r b for r = 0..T."""
        r = np.arange(self.T + 1)[:, None]
        return self.positions - r * self.b


@dataclass(frozen=True)
class Ensemble:
    mode: str
    env_seed: int
    master_seed: int
    x0: np.ndarray
    T: int
    M: int
    b: np.ndarray
    eta2: np.ndarray
    terminal_x: np.ndarray  # (M, n)
    qv: np.ndarray  # (M, n, n): sum over steps of dY dY^T
    qv_sq: np.ndarray  # (M, n, n): sum over steps of (dY_i dY_j)^2
    occupation: np.ndarray  # (S,): pooled visits per environment state
    collisions: int  # sum over (r, site) of (walkers there)^2
    qv_trace: np.ndarray  # (T, n, n): walker mean of [Y]_t / t, t = 1..T
    occupation_trace: np.ndarray  # (T, S): pooled fractions up to time t

    @property
    def terminal_y(self) -> np.ndarray:
        return self.terminal_x - self.T * self.b


def walker_seeds(master_seed: int, index) -> np.ndarray:
    return hashing.hash_keys(master_seed, hashing.TAG_WALKER, np.asarray(index, dtype=np.uint64))


def _row_cdfs(model: Model) -> np.ndarray:
    cum = np.cumsum(model.kernel.rows(), axis=1)
    return cum[:, :-1]


def step(model: Model, env: QuenchedEnvironment, t: int, x, draw: float) -> np.ndarray:
    """Displacement chosen by inverse CDF at site ``x``, time ``t``."""
    s = int(env.state_index(t, x))
    cum = np.cumsum(model.kernel.p0 + model.kernel.c[:, s])
    k = min(int(np.searchsorted(cum, draw, side="right")), len(cum) - 1)
    return model.kernel.support[k].copy()


class _Engine:
    """Advances a block of walkers in lockstep.

    Every per-walker quantity is updated elementwise, so walkers may be split
    into contiguous chunks processed by separate threads.
    """

    def __init__(self, model, env, x0, wseeds, mode, record_steps=False,
                 track_collisions=True):
        self.model = model
        self.env = env
        d = model.derived
        self.b = d.b
        self.support = model.kernel.support
        self.centered = self.support.astype(float) - d.b
        self.cdf = _row_cdfs(model)
        self.cdf_cols = [np.ascontiguousarray(col) for col in self.cdf.T]
        self.n = model.dim
        m = len(wseeds)
        self.m = m
        self.x = np.tile(np.asarray(x0, dtype=np.int64), (m, 1))
        self.step_prefix = hashing.hash_keys(wseeds, hashing.TAG_STEP)
        if mode == "annealed":
            idx = np.arange(m, dtype=np.uint64)
            self.env_seeds = hashing.hash_keys(env.seed, hashing.TAG_ANNEAL, idx)
        else:
            self.env_seeds = None
        self.qv = np.zeros((m, self.n, self.n))
        self.qv_sq = np.zeros((m, self.n, self.n))
        self.occupation = np.zeros(len(model.alphabet), dtype=np.int64)
        self.collisions = 0
        self.track_collisions = track_collisions and mode == "quenched"
        self.steps = [] if record_steps else None

    def advance_chunk(self, t, sl, env_pre):
        x = self.x[sl]
        pre = env_pre if self.env_seeds is None else env_pre[sl]
        states = self.env.states_from_prefix(pre, x)
        u = hashing.to_unit(hashing.fold(self.step_prefix[sl], np.uint64(t)))
        k = np.zeros(len(u), dtype=np.intp)
        for j in range(self.cdf.shape[1]):
            k += u >= self.cdf_cols[j][states]
        x += self.support[k]
        dy = self.centered[k]
        outer = dy[:, :, None] * dy[:, None, :]
        self.qv[sl] += outer
        outer *= outer
        self.qv_sq[sl] += outer
        if self.steps is not None:
            self.steps.append(self.support[k].copy())
        return np.bincount(states, minlength=len(self.occupation))

    def count_collisions(self):
        x = self.x
        lo = x.min(axis=0)
        ext = x.max(axis=0) - lo + 1
        if np.prod(ext.astype(float)) <= 4 * self.m + 1024:
            key = np.ravel_multi_index((x - lo).T, ext)
            counts = np.bincount(key)
        else:
            _, counts = np.unique(x, axis=0, return_counts=True)
        return int(np.dot(counts, counts))

    def run(self, T, workers=1, traces=False):
        chunks = [slice(a[0], a[-1] + 1) for a in np.array_split(np.arange(self.m), workers) if len(a)]
        qv_trace = np.zeros((T, self.n, self.n)) if traces else None
        occ_trace = np.zeros((T, len(self.occupation))) if traces else None
        pool = ThreadPoolExecutor(len(chunks)) if len(chunks) > 1 else None
        try:
            for t in range(T):
                seeds = self.env.seed if self.env_seeds is None else self.env_seeds
                env_pre = env_prefix(seeds, t)
                if self.track_collisions:
                    self.collisions += self.count_collisions()
                if pool is None:
                    counts = [self.advance_chunk(t, chunks[0], env_pre)]
                else:
                    counts = list(pool.map(lambda sl: self.advance_chunk(t, sl, env_pre), chunks))
                for c in counts:
                    self.occupation += c
                if traces:
                    qv_trace[t] = self.qv.sum(axis=0) / (self.m * (t + 1))
                    occ_trace[t] = self.occupation / (self.m * (t + 1))
        finally:
            if pool is not None:
                pool.shutdown()
        if not self.track_collisions:
            self.collisions = self.m * T
        return qv_trace, occ_trace


def run_walk(model: Model, env: QuenchedEnvironment, x0, T: int, walker_seed: int) -> WalkPath:
    return run_walks(model, env, x0, T, [walker_seed])[0]


def run_walks(model: Model, env: QuenchedEnvironment, x0, T: int, seeds) -> list[WalkPath]:
    """Full paths for several walker seeds, advanced together."""
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    x0 = np.asarray(x0, dtype=np.int64).reshape(model.dim)
    seeds = np.array([hashing.as_u64(s) for s in seeds], dtype=np.uint64)
    eng = _Engine(model, env, x0, seeds, "quenched", record_steps=True,
                  track_collisions=False)
    eng.run(T)
    steps = np.array(eng.steps, dtype=np.int64).reshape(T, len(seeds), model.dim)
    b = model.derived.b
    return [WalkPath(x0=x0, steps=steps[:, i], b=b) for i in range(len(seeds))]


def run_ensemble(model: Model, env: QuenchedEnvironment, x0, T: int, M: int,
                 master_seed: int, workers: int = 1, mode: str = "quenched",
                 traces: bool = True) -> Ensemble:
    """Run ``M`` walkers for ``T`` steps from ``x0``.

    In quenched mode every walker sees the same environment ``env``. In
    annealed mode walker ``w`` gets its own environment seeded by
    ``hash(env.seed, TAG_ANNEAL, w)``.
    """
    if M < 1 or workers < 1 or T < 0:
        raise ValueError("need M >= 1, workers >= 1 and T >= 0")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    x0 = np.asarray(x0, dtype=np.int64).reshape(model.dim)
    wseeds = walker_seeds(master_seed, np.arange(M))
    eng = _Engine(model, env, x0, wseeds, mode)
    qv_trace, occ_trace = eng.run(T, workers=min(workers, M), traces=traces)
    d = model.derived
    return Ensemble(
        mode=mode, env_seed=int(env.seed), master_seed=int(master_seed), x0=x0,
        T=T, M=M, b=d.b, eta2=d.eta2, terminal_x=eng.x, qv=eng.qv, qv_sq=eng.qv_sq,
        occupation=eng.occupation, collisions=eng.collisions,
        qv_trace=qv_trace, occupation_trace=occ_trace,
    )
