"""Figure rendering for the sweep and experiment reports (file output only)."""

from __future__ import annotations


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_dsbs_sweep(rows, path: str) -> None:
    """Exact vs Wyner rate curves over the crossover grid."""
    plt = _plt()
    ps = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(ps, [r[1] for r in rows], label="exact / order-inf", lw=1.6)
    ax.plot(ps, [r[2] for r in rows], label="Wyner", lw=1.6, ls="--")
    ax.set_xlabel("crossover probability p")
    ax.set_ylabel("rate (nats)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_gaussian_sweep(rows, path: str) -> None:
    """The three Gaussian rate curves over the correlation grid."""
    plt = _plt()
    rhos = [r[0] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(rhos, [r[1] for r in rows], label="Wyner", lw=1.6)
    ax.plot(rhos, [r[2] for r in rows], label="exact upper bound", lw=1.6, ls="--")
    ax.plot(rhos, [r[3] for r in rows], label="dyadic one-shot bound", lw=1.2, ls=":")
    ax.set_xlabel("correlation rho")
    ax.set_ylabel("rate (nats)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_covering(rows, path: str) -> None:
    """Per-seed covering divergences with the median trend across rates."""
    import numpy as np

    plt = _plt()
    rates = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for rate in rates:
        vals = [r[2] for r in rows if r[0] == rate]
        ax.scatter([rate] * len(vals), vals, s=8, alpha=0.35, color="tab:blue")
    medians = [float(np.median([r[2] for r in rows if r[0] == rate])) for rate in rates]
    ax.plot(rates, medians, color="tab:red", marker="o", label="median")
    ax.set_xlabel("rate R (nats/symbol)")
    ax.set_ylabel("exact D_inf")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
