"""Figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.stats import norm  # noqa: E402

# fixed metadata keeps PNG bytes identical across runs
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_clt(whitened, path, threshold=None, title=""):
    """Histogram of the whitened sample against N(0, 1), plus ECDF minus Phi."""
    x = np.asarray(whitened, dtype=float)
    x = x[:, 0] if x.ndim == 2 else x
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    grid = np.linspace(-4.5, 4.5, 400)
    ax1.hist(x, bins=80, range=(-4.5, 4.5), density=True, color="0.7", label="sample")
    ax1.plot(grid, norm.pdf(grid), "k-", lw=1.2, label="N(0, 1)")
    ax1.set_xlabel("whitened $Y_T/\\sqrt{T}$ (first coordinate)")
    ax1.set_ylabel("density")
    ax1.legend(frameon=False)

    xs = np.sort(x)
    ecdf = np.arange(1, len(xs) + 1) / len(xs)
    ax2.plot(xs, ecdf - norm.cdf(xs), "k-", lw=0.8)
    if threshold is not None:
        for s in (-1, 1):
            ax2.axhline(s * threshold, color="r", ls="--", lw=0.8)
    ax2.axhline(0, color="0.5", lw=0.5)
    ax2.set_xlabel("x")
    ax2.set_ylabel("ECDF(x) - $\\Phi$(x)")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_qv_trace(qv_trace, eta2, path, band=None):
    """Walker mean of [Y]_t / t for each diagonal entry, against eta2."""
    qv_trace = np.asarray(qv_trace)
    t = np.arange(1, len(qv_trace) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(qv_trace.shape[1]):
        line, = ax.plot(t, qv_trace[:, i, i], lw=1, label=f"$[Y]_t/t$ ({i + 1},{i + 1})")
        ax.axhline(eta2[i][i], color=line.get_color(), ls="--", lw=0.8)
        if band is not None:
            ax.axhspan(eta2[i][i] - band[i][i], eta2[i][i] + band[i][i],
                       color=line.get_color(), alpha=0.15, lw=0)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("walker mean of $[Y]_t/t$")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_occupation(occ_trace, pi, labels, path):
    occ_trace = np.asarray(occ_trace)
    t = np.arange(1, len(occ_trace) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for s, lab in enumerate(labels):
        line, = ax.plot(t, occ_trace[:, s], lw=1, label=f"state {lab}")
        ax.axhline(pi[s], color=line.get_color(), ls="--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("pooled occupation fraction")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_oracle(levels, moments, eta2, path):
    """Final exact law (bars in 1-D, heat map in 2-D) and trace of H_t."""
    last = levels[-1]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    if last.dim == 1:
        xs = last.origin[0] + np.arange(last.probs.shape[0])
        ax1.bar(xs, last.probs, color="0.5", width=0.8)
        ax1.set_xlabel("$X_t$")
        ax1.set_ylabel("probability")
    elif last.dim == 2:
        o = last.origin
        ext = (o[1] - 0.5, o[1] + last.probs.shape[1] - 0.5,
               o[0] - 0.5, o[0] + last.probs.shape[0] - 0.5)
        im = ax1.imshow(last.probs, origin="lower", extent=ext, cmap="Greys")
        fig.colorbar(im, ax=ax1)
        ax1.set_xlabel("$x_2$")
        ax1.set_ylabel("$x_1$")
    else:
        ax1.text(0.5, 0.5, f"{last.dim}-D law not drawn", ha="center",
                 transform=ax1.transAxes)
    ax1.set_title(f"exact law at t = {last.t}")

    t = np.array([m.t for m in moments])
    tr = np.array([np.trace(m.matrix) for m in moments])
    ax2.plot(t, tr, "ko-", ms=3, label="trace $H^\\xi_t$")
    ax2.plot(t, t * np.trace(eta2), "r--", lw=1, label="t trace $\\eta^2$")
    ax2.set_xlabel("t")
    ax2.legend(frameon=False)
    return _save(fig, path)
