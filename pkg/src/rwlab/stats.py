"""Statistical checks on simulated ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogi
from scipy.stats import norm

from . import hashing
from .environment import QuenchedEnvironment
from .model import Model

SYM_TOL = 1e-12
NEG_EIG_TOL = 1e-10
ZERO_EIG = 1e-12


@dataclass(frozen=True)
class TestReport:
    test_id: str
    statistic: float
    threshold: float
    passed: bool
    sample_size: int
    details: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def as_dict(self):
        return {
            "id": self.test_id,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "pass": self.passed,
            "sample_size": self.sample_size,
            "details": self.details,
        }


@dataclass(frozen=True)
class StandardizedSample:
    vectors: np.ndarray  # (M, rank)
    whitener: np.ndarray  # (rank, n): rows map raw vectors to whitened coordinates
    dropped: int  # directions with zero variance


def empirical_covariance(samples) -> np.ndarray:
    """Mean-centred second moment with denominator M (not M - 1)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ValueError("need at least two samples")
    c = x - x.mean(axis=0)
    cov = c.T @ c / len(x)
    return 0.5 * (cov + cov.T)


def standardize(samples, eta2) -> StandardizedSample:
    """Whiten by the pseudo-inverse symmetric square root of ``eta2``.

    Eigenvalues below 1e-12 count as zero; those directions are dropped and
    the output has one column per remaining direction.
    """
    a = np.atleast_2d(np.asarray(eta2, dtype=float))
    if np.abs(a - a.T).max() > SYM_TOL:
        raise ValueError("covariance matrix is not symmetric")
    lam, q = np.linalg.eigh(a)
    if lam.min() < -NEG_EIG_TOL:
        raise ValueError(f"covariance matrix has negative eigenvalue {lam.min():.3g}")
    keep = lam > ZERO_EIG
    # rank-deficient: express the output in the retained eigenbasis
    qk = q[:, keep]
    inv_root = qk @ np.diag(lam[keep] ** -0.5) @ qk.T
    if keep.all():
        whitener = inv_root
    else:
        whitener = qk.T @ inv_root
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return StandardizedSample(vectors=x @ whitener.T, whitener=whitener,
                              dropped=int((~keep).sum()))


def ks_statistic(x) -> float:
    """Two-sided one-sample KS distance between the sample and N(0, 1)."""
    x = np.sort(np.asarray(x, dtype=float))
    m = len(x)
    cdf = norm.cdf(x)
    above = np.arange(1, m + 1) / m - cdf
    below = cdf - np.arange(m) / m
    return float(max(above.max(), below.max()))


def ks_threshold(m: int, alpha: float, k: int) -> float:
    """Asymptotic Bonferroni-corrected critical distance c(alpha/k) / sqrt(m)."""
    return float(kolmogi(alpha / k) / np.sqrt(m))


def random_directions(dim: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((k, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def ks_projection_test(std: StandardizedSample, directions: int = 5, seed: int = 0,
                       alpha: float = 0.01) -> TestReport:
    x = std.vectors
    m = len(x)
    if m < 100:
        raise ValueError(f"KS projection test needs at least 100 samples, got {m}")
    dirs = random_directions(x.shape[1], directions, seed)
    ds = [ks_statistic(x @ d) for d in dirs]
    thr = ks_threshold(m, alpha, directions)
    stat = max(ds)
    return TestReport("ks_projection", stat, thr, bool(stat < thr), m, {
        "alpha": alpha, "directions": dirs.tolist(), "D": ds,
        "direction_seed": seed, "dropped_directions": std.dropped,
    })


def lattice_basis(model: Model) -> np.ndarray:
    """Basis (rows) of the lattice spanned by differences of support points.

    X_T - X_0 - T u_0 always lies in this lattice. Returned in Hermite normal
    form; for a support whose differences do not span Z^n the basis has fewer
    rows than n.
    """
    sup = model.kernel.support
    diffs = (sup[1:] - sup[0]).tolist()
    return _hermite_rows(diffs, model.dim)


def _hermite_rows(vectors, n) -> np.ndarray:
    rows = [list(map(int, v)) for v in vectors if any(v)]
    basis = []
    col = 0
    while rows and col < n:
        rows = [r for r in rows if any(r)]
        nz = [r for r in rows if r[col] != 0]
        if not nz:
            col += 1
            continue
        while len([r for r in rows if r[col] != 0]) > 1:
            nz = sorted((r for r in rows if r[col] != 0), key=lambda r: abs(r[col]))
            pivot = nz[0]
            rest = [r for r in rows if r is not pivot]
            new = []
            for r in rest:
                if r[col] != 0:
                    q = r[col] // pivot[col]
                    r = [a - q * b for a, b in zip(r, pivot)]
                new.append(r)
            rows = [pivot] + [r for r in new if any(r)]
        pivot = next(r for r in rows if r[col] != 0)
        if pivot[col] < 0:
            pivot = [-a for a in pivot]
        basis.append(pivot)
        rows = [r for r in rows if r[col] == 0 and any(r)]
        col += 1
    return np.array(basis, dtype=np.int64).reshape(len(basis), n)


def dequantize(samples, basis, seed: int) -> np.ndarray:
    """Spread lattice-valued samples uniformly over a fundamental cell.

    Adds ``sum_i (U_i - 1/2) basis_i`` with independent uniforms keyed by
    ``(seed, sample index, i)``. The result has a continuous law whose CDF
    interpolates the lattice CDF, which is what a KS comparison against a
    continuous limit requires.
    """
    x = np.asarray(samples, dtype=float)
    idx = np.arange(len(x), dtype=np.uint64)
    noise = np.zeros_like(x)
    for i, vec in enumerate(np.atleast_2d(basis)):
        u = hashing.to_unit(hashing.hash_keys(seed, hashing.TAG_JITTER, i, idx))
        noise += (u - 0.5)[:, None] * vec
    return x + noise


def clt_sample(ensemble) -> np.ndarray:
    """Y_T / sqrt(T) for every walker."""
    return ensemble.terminal_y / np.sqrt(ensemble.T)


def covariance_check(ensemble, rel_tol: float = 0.03) -> TestReport:
    """Relative max-norm gap between the covariance of Y_T/sqrt(T) and eta2."""
    cov = empirical_covariance(clt_sample(ensemble))
    eta2 = ensemble.eta2
    scale = np.abs(eta2).max()
    stat = float(np.abs(cov - eta2).max() / scale) if scale > 0 else float(np.abs(cov).max())
    return TestReport("covariance", stat, rel_tol, bool(stat <= rel_tol), ensemble.M, {
        "empirical": cov.tolist(), "eta2": eta2.tolist(),
        "mean": clt_sample(ensemble).mean(axis=0).tolist(),
    })


def clt_test(model: Model, ensemble, directions: int = 5, seed: int = 0,
             alpha: float = 0.01) -> TestReport:
    """Projection KS test of whitened Y_T / sqrt(T) against N(0, I).

    The walk lives on a lattice, so Y_T/sqrt(T) has atoms spaced about
    T^{-1/2} apart; at T = 1000 the resulting steps in the empirical CDF
    exceed the KS critical distance for M = 1e5. Samples are therefore spread
    over one lattice cell before scaling. The undithered distances are kept
    in the report.
    """
    raw = ensemble.terminal_y
    smooth = dequantize(raw, lattice_basis(model), seed)
    scale = np.sqrt(ensemble.T)
    rep = ks_projection_test(standardize(smooth / scale, ensemble.eta2), directions, seed, alpha)
    raw_std = standardize(raw / scale, ensemble.eta2)
    dirs = np.array(rep.details["directions"])
    rep.details["D_undithered"] = [ks_statistic(raw_std.vectors @ d) for d in dirs]
    return rep


def qv_convergence(ensemble, eta2=None, n_sigma: float = 4.0) -> TestReport:
    """Walker average of [Y]_T / T against eta2.

    Band: ``n_sigma`` times the per-entry increment standard deviation over
    sqrt(M T). That treats all M T increments as independent. Walkers that
    share a site at the same time see the same environment state, so the
    report also carries a band that accounts for those coincidences.
    """
    eta2 = ensemble.eta2 if eta2 is None else np.asarray(eta2)
    m, t = ensemble.M, ensemble.T
    if t < 100:
        raise ValueError(f"QV convergence check needs T >= 100, got {t}")
    n_inc = m * t
    mean_inc = ensemble.qv.sum(axis=0) / n_inc
    mean_sq = ensemble.qv_sq.sum(axis=0) / n_inc
    sd = np.sqrt(np.maximum(mean_sq - mean_inc**2, 0.0))
    gap = np.abs(mean_inc - eta2)
    thr_entry = n_sigma * sd / np.sqrt(n_inc)
    ratio = np.where(thr_entry > 0, gap / np.where(thr_entry > 0, thr_entry, 1), np.where(gap > 0, np.inf, 0))
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    stat, thr = float(gap[i, j]), float(thr_entry[i, j])
    passed = bool(np.all(gap <= thr_entry))
    return TestReport("qv_convergence", stat, thr, passed, n_inc, {
        "mean_qv_over_T": mean_inc.tolist(), "eta2": np.asarray(eta2).tolist(),
        "increment_sd": sd.tolist(), "threshold_per_entry": thr_entry.tolist(),
        "worst_entry": [int(i), int(j)],
        "collision_factor": ensemble.collisions / n_inc,
    })


def qv_shared_env_band(model: Model, ensemble, n_sigma: float = 4.0) -> np.ndarray:
    """Band for the QV average when walkers may share site-time pairs.

    Var = [M T E_s Var(D | s) + C Var_s(Sigma_s)] / (M T)^2 with C the sum of
    squared walker counts per site-time pair. Reduces to the independent band
    when C = M T.
    """
    from .model import step_covariances

    d = model.derived
    sigma = step_covariances(model.kernel, d.b)
    pi = model.law.probs
    between = np.einsum("s,sij->ij", pi, (sigma - d.eta2) ** 2)
    n_inc = ensemble.M * ensemble.T
    mean_sq = ensemble.qv_sq.sum(axis=0) / n_inc
    total = np.maximum(mean_sq - d.eta2**2, 0.0)
    within = np.maximum(total - between, 0.0)
    var = (n_inc * within + ensemble.collisions * between) / n_inc**2
    return n_sigma * np.sqrt(var)


def occupation_lln(ensemble, env: QuenchedEnvironment, n_sigma: float = 4.0) -> TestReport:
    """Pooled fraction of visits to each environment state against its law."""
    pooled = ensemble.M * ensemble.T
    if pooled < 10_000:
        raise ValueError(f"occupation check needs M*T >= 1e4 visits, got {pooled}")
    pi = env.law.probs
    frac = ensemble.occupation / pooled
    gap = np.abs(frac - pi)
    band = n_sigma * np.sqrt(pi * (1 - pi) / pooled)
    shared = n_sigma * np.sqrt(pi * (1 - pi) * ensemble.collisions) / pooled
    ok = bool(np.all(gap <= band))
    s = int(np.argmax(np.where(band > 0, gap / np.where(band > 0, band, 1), np.where(gap > 0, np.inf, 0))))
    return TestReport("occupation_lln", float(gap[s]), float(band[s]), ok, pooled, {
        "fractions": frac.tolist(), "pi": pi.tolist(), "bands": band.tolist(),
        "states": list(env.alphabet.states),
        "shared_env_bands": shared.tolist(),
        "collision_factor": ensemble.collisions / pooled,
    })


def martingale_residual(model: Model, env: QuenchedEnvironment, path, b=None) -> float:
    """max over the visited (t, X_t) of |sum_u (u - b) P(u | xi_t(X_t))|.

    ``b`` defaults to the mean step of the averaged kernel, which is the
    model drift for a valid kernel and still defined for an invalid one.
    """
    sup = model.kernel.support.astype(float)
    if b is None:
        k = model.kernel
        b = sup.T @ (k.p0 + k.c @ model.law.probs)
    b = np.asarray(b, dtype=float)
    means = model.kernel.rows() @ (sup - b)  # (S, n)
    if path.T == 0:
        return 0.0
    pos = path.positions[:-1]
    states = env.state_index(np.arange(path.T), pos)
    return float(np.abs(means[states]).max())
