"""SVG chart rendering for sweep and flow outputs (matplotlib, Agg backend)."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SWEEP_METRICS = {
    "corr_mean": "Mean normalized correlation",
    "rank_r_frac": "Fraction rank-r",
    "rank_def_frac": "Fraction rank-deficient",
    "time_mean_s": "Mean solve time (s)",
    "iters_mean": "Mean iterations",
    "certified_frac": "Fraction certified global",
}


def sweep_charts(rows: list[dict], out_prefix: str) -> list[str]:
    """One SVG line chart per sweep metric, sigma on x, one series per p."""
    p_values = sorted({row["p"] for row in rows})
    paths = []
    for metric, label in SWEEP_METRICS.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for p in p_values:
            series = sorted((row["sigma"], row[metric])
                            for row in rows if row["p"] == p)
            ax.plot([s for s, _ in series], [v for _, v in series],
                    marker="o", label=f"p = {p}")
        ax.set_xlabel(r"noise level $\sigma$")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = f"{out_prefix}_{metric}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def trajectory_chart(samples, out_path: str) -> str:
    """Sync error and energy versus time on a log scale."""
    t = [s[0] for s in samples]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(t, [max(s[1], 1e-300) for s in samples], label="sync error")
    ax.semilogy(t, [max(s[2], 1e-300) for s in samples], label="energy")
    ax.set_xlabel("t")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
