"""Exact small-horizon laws by pushing probability mass site by site.

Levels are dense arrays over the bounding box of reachable sites, indexed by
the integer position X. Centering by ``t b`` happens only when moments are
taken, so the state never has to represent the shifted lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import QuenchedEnvironment
from .model import Model, step_covariances

DEFAULT_CAP = 25
PRUNE_BELOW = 1e-300


class HorizonError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeDistribution:
    """Probabilities of X_t on the box ``origin + [0, probs.shape)``.

    ``deficit`` is the total mass pruned so far (entries below 1e-300).
    """

    t: int
    origin: np.ndarray
    probs: np.ndarray
    deficit: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.origin)

    def total(self) -> float:
        return float(self.probs.sum())

    def sites(self) -> np.ndarray:
        """Coordinates of every box cell, shape probs.shape + (n,)."""
        axes = [o + np.arange(k) for o, k in zip(self.origin, self.probs.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def support(self):
        """Sites with positive mass and their probabilities, lexicographic."""
        idx = np.argwhere(self.probs > 0)
        return idx + self.origin, self.probs[tuple(idx.T)]

    def items(self):
        xs, ps = self.support()
        return [(tuple(int(v) for v in x), float(p)) for x, p in zip(xs, ps)]

    def prob(self, x) -> float:
        i = np.asarray(x, dtype=np.int64) - self.origin
        if np.any(i < 0) or np.any(i >= self.probs.shape):
            return 0.0
        return float(self.probs[tuple(i)])

    def moment(self, b) -> np.ndarray:
        """E[(X_t - t b)(X_t - t b)^T] under this level."""
        xs, ps = self.support()
        y = xs - self.t * np.asarray(b, dtype=float)
        m = (y * ps[:, None]).T @ y
        return 0.5 * (m + m.T)


@dataclass(frozen=True)
class MomentMatrix:
    t: int
    matrix: np.ndarray


def _check_cap(T, cap):
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    if T > cap:
        raise HorizonError(f"horizon {T} exceeds the exact-propagation cap {cap}")


def _push(level: LatticeDistribution, support, weights) -> LatticeDistribution:
    """One step: ``weights[..., k]`` is the chance of jumping by ``support[k]``."""
    lo = support.min(axis=0)
    span = support.max(axis=0) - lo
    shape = tuple(np.array(level.probs.shape) + span)
    new = np.zeros(shape)
    for k, u in enumerate(support):
        off = u - lo
        sl = tuple(slice(o, o + s) for o, s in zip(off, level.probs.shape))
        new[sl] += level.probs * weights[..., k]
    tiny = (new > 0) & (new < PRUNE_BELOW)
    deficit = level.deficit + float(new[tiny].sum())
    new[tiny] = 0.0
    return LatticeDistribution(t=level.t + 1, origin=level.origin + lo, probs=new,
                               deficit=deficit)


def _start(x0, n) -> LatticeDistribution:
    x0 = np.asarray(x0, dtype=np.int64).reshape(n)
    return LatticeDistribution(t=0, origin=x0, probs=np.ones((1,) * n))


def site_states(env: QuenchedEnvironment, level: LatticeDistribution) -> np.ndarray:
    return env.state_index(level.t, level.sites())


def quenched_distribution(model: Model, env: QuenchedEnvironment, x0, T: int,
                          cap: int = DEFAULT_CAP) -> list[LatticeDistribution]:
    """Laws of X_0..X_T given the fixed environment ``env``."""
    _check_cap(T, cap)
    rows = model.kernel.rows()
    levels = [_start(x0, model.dim)]
    for _ in range(T):
        cur = levels[-1]
        levels.append(_push(cur, model.kernel.support, rows[site_states(env, cur)]))
    return levels


def annealed_distribution(model: Model, T: int, x0=None,
                          cap: int = DEFAULT_CAP) -> list[LatticeDistribution]:
    """Convolution powers of the averaged kernel."""
    _check_cap(T, cap)
    x0 = np.zeros(model.dim, dtype=np.int64) if x0 is None else x0
    pbar = model.derived.pbar
    levels = [_start(x0, model.dim)]
    for _ in range(T):
        cur = levels[-1]
        w = np.broadcast_to(pbar, cur.probs.shape + pbar.shape)
        levels.append(_push(cur, model.kernel.support, w))
    return levels


def quenched_moment(model: Model, dists) -> list[MomentMatrix]:
    b = model.derived.b
    return [MomentMatrix(d.t, d.moment(b)) for d in dists]


def increment_check(model: Model, env: QuenchedEnvironment, dists, t: int) -> float:
    """Largest entrywise gap between two computations of H_{t+1} - H_t.

    One side differences the exact second moments of consecutive levels. The
    other averages the per-site step covariance at time ``t`` against the
    level-``t`` law.
    """
    if not 0 <= t < len(dists) - 1:
        raise IndexError(f"need levels t and t+1, have 0..{len(dists) - 1}")
    b = model.derived.b
    direct = dists[t + 1].moment(b) - dists[t].moment(b)
    sigma = step_covariances(model.kernel, b)
    states = site_states(env, dists[t])
    probs = dists[t].probs
    formula = np.tensordot(probs, sigma[states], axes=probs.ndim)
    return float(np.abs(direct - formula).max())


def annealed_moment_identity(model: Model, T: int, cap: int = DEFAULT_CAP) -> float:
    """max over t <= T of the max-norm of H_t - t * eta2 under the averaged law."""
    levels = annealed_distribution(model, T, cap=cap)
    d = model.derived
    return max(float(np.abs(lv.moment(d.b) - lv.t * d.eta2).max()) for lv in levels)


def cross_term(model: Model, dists, env: QuenchedEnvironment | None = None) -> float:
    """max over levels of |E[(Y_{t+1} - Y_t)_i (Y_t)_j]|.

    With ``env`` the conditional step means come from the site states;
    without it from the averaged kernel.
    """
    d = model.derived
    sup = model.kernel.support.astype(float)
    worst = 0.0
    for lv in dists:
        if env is None:
            drift = np.broadcast_to(sup.T @ d.pbar - d.b, lv.probs.shape + (model.dim,))
        else:
            means = model.kernel.rows() @ sup - d.b
            drift = means[site_states(env, lv)]
        y = lv.sites() - lv.t * d.b
        w = (lv.probs[..., None] * drift).reshape(-1, model.dim)
        val = w.T @ y.reshape(-1, model.dim)
        worst = max(worst, float(np.abs(val).max()))
    return worst
