"""Shared generators and brute-force oracles for the test modules."""

from fractions import Fraction as F
from itertools import product

import numpy as np
from hypothesis import strategies as st

from rwlab.model import EnvAlphabet, EnvLaw, Kernel, Model


def exact_derived(model_def):
    """b, pbar and eta2 by rational double loops."""
    sup, p0, c, pi = model_def["support"], model_def["p0"], model_def["c"], model_def["pi"]
    n = len(sup[0])
    pbar = [p0[k] + sum(pi[s] * c[s][k] for s in pi) for k in range(len(sup))]
    b = [sum(sup[k][i] * pbar[k] for k in range(len(sup))) for i in range(n)]
    eta2 = [[F(0)] * n for _ in range(n)]
    for k, u in enumerate(sup):
        for i in range(n):
            for j in range(n):
                eta2[i][j] += (u[i] - b[i]) * (u[j] - b[j]) * pbar[k]
    return b, pbar, eta2


def exact_row(model_def, s):
    return [model_def["p0"][k] + model_def["c"][s][k] for k in range(len(model_def["support"]))]


def brute_force_law(model, env, x0, T):
    """P(X_T = x) by enumerating every path of length T."""
    sup = model.kernel.support
    rows = model.kernel.rows()
    out = {}
    for ks in product(range(len(sup)), repeat=T):
        x = np.array(x0, dtype=np.int64)
        p = 1.0
        for t, k in enumerate(ks):
            p *= rows[int(env.state_index(t, x)), k]
            if p == 0.0:
                break
            x = x + sup[k]
        if p > 0:
            key = tuple(int(v) for v in x)
            out[key] = out.get(key, 0.0) + p
    return out


@st.composite
def valid_models(draw, max_dim=2, max_states=3):
    """Random kernels that satisfy all five conditions by construction.

    Each c(., s) is drawn in the null space of [1; u^T] (zero sum, zero
    first moment), the last state's column restores the pi-average to zero,
    and everything is scaled until p0 + c stays inside [0, 1].
    """
    n = draw(st.integers(1, max_dim))
    pts = draw(st.lists(st.tuples(*[st.integers(-2, 2)] * n), min_size=n + 2,
                        max_size=n + 4, unique=True))
    sup = np.array(sorted(pts), dtype=np.int64)
    k = len(sup)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(0.2, 1.0, k)
    p0 /= p0.sum()
    s_count = draw(st.integers(1, max_states))
    pi = rng.uniform(0.2, 1.0, s_count)
    pi /= pi.sum()
    a = np.vstack([np.ones(k), sup.T.astype(float)])
    _, sv, vt = np.linalg.svd(a)
    rank = int((sv > 1e-9).sum())
    null = vt[rank:].T
    c = np.zeros((k, s_count))
    if null.shape[1] and s_count > 1:
        c[:, :-1] = null @ rng.standard_normal((null.shape[1], s_count - 1))
        c[:, -1] = -(c[:, :-1] @ pi[:-1]) / pi[-1]
        room = np.min(p0[:, None] / np.maximum(np.abs(c), 1e-300))
        c *= 0.9 * min(room, 1.0)
    states = tuple(f"s{i}" for i in range(s_count))
    return Model(EnvAlphabet(states), EnvLaw(pi), Kernel(sup, p0, c), name="random")
