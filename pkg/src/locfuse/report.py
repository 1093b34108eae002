"""Render run and study figures to image files next to the CSV outputs."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_CLASS_COLORS = {"2d": "tab:blue", "vertical": "tab:red", "3d": "tab:green"}


def save_error_cdf_figure(reports: dict, path, title: str = "Positioning error CDF") -> None:
    """CDF curves per error class for the joint node pool.

    reports: node class -> error class -> MetricsReport (summarize_runs form).
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for err_class, rep in reports["joint"].items():
        ax.plot(rep.cdf_thresholds, rep.cdf, label=f"{err_class} error",
                color=_CLASS_COLORS.get(err_class))
    ax.axvline(1.0, color="gray", ls="--", lw=0.8)
    ax.axvline(0.2, color="gray", ls=":", lw=0.8)
    ax.set_xlabel("error [m]")
    ax.set_ylabel("CDF")
    ax.set_xlim(left=0.0)
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_error_trace_figure(result, path) -> None:
    """Median per-epoch 3D error for targets and anchors over one run."""
    t = np.arange(result.epochs) * result.epoch_dt_s
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(t, np.median(result.err3d[:, :result.n_targets], axis=1),
            label="targets (median 3D)", color="tab:blue")
    ax.plot(t, np.median(result.err3d[:, result.n_targets:], axis=1),
            label="anchors (median 3D)", color="tab:orange")
    ax.axvline(result.burn_in_epochs * result.epoch_dt_s, color="gray",
               ls="--", lw=0.8, label="burn-in")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("3D error [m]")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_geometry_figure(comparison, path) -> None:
    """Median error with interquartile bars, collinear vs non-collinear."""
    err_classes = ("2d", "vertical")
    kinds = ("collinear", "noncollinear")
    colors = {"collinear": "tab:red", "noncollinear": "tab:green"}
    fig, axes = plt.subplots(1, len(err_classes), figsize=(8.5, 4.0))
    for ax, err in zip(axes, err_classes):
        for i, kind in enumerate(kinds):
            rep = comparison.report(kind, "joint", err)
            lo, med, hi = (rep.percentiles[25], rep.median, rep.percentiles[75])
            ax.bar(i, hi - lo, bottom=lo, width=0.6, color=colors[kind],
                   alpha=0.6, label=kind)
            ax.plot([i - 0.3, i + 0.3], [med, med], color="black", lw=2)
        ax.set_xticks(range(len(kinds)))
        ax.set_xticklabels(kinds)
        ax.set_ylabel(f"{err} error [m]")
        ax.set_yscale("log")
        ax.grid(alpha=0.3, axis="y", which="both")
    axes[0].set_title("horizontal")
    axes[1].set_title("vertical")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(sweep_result, path) -> None:
    """Heatmap of sub-1 m 3D probability over the node-count grid."""
    table = sweep_result.p_sub1m_3d
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    im = ax.imshow(table, origin="lower", aspect="auto", cmap="viridis",
                   vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(sweep_result.target_counts)))
    ax.set_xticklabels(sweep_result.target_counts)
    ax.set_yticks(range(len(sweep_result.anchor_counts)))
    ax.set_yticklabels(sweep_result.anchor_counts)
    ax.set_xlabel("target nodes")
    ax.set_ylabel("anchor nodes")
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            ax.text(j, i, f"{table[i, j]:.2f}", ha="center", va="center",
                    color="white" if table[i, j] < 0.6 else "black", fontsize=8)
    fig.colorbar(im, ax=ax, label="P(3D error < 1 m)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bench_figure(aoa_errors_deg, toa_errors_m, path) -> None:
    """Error CDFs of the beam-sweep AoA and OFDM delay estimators."""
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 4.0))
    for ax, (data, label, bound) in zip(axes, (
            (np.sort(np.abs(aoa_errors_deg)), "AoA error [deg]", 2.0),
            (np.sort(np.abs(toa_errors_m)), "delay error [m]", 0.2))):
        cdf = np.arange(1, data.size + 1) / data.size
        ax.plot(data, cdf)
        ax.axvline(bound, color="gray", ls="--", lw=0.8)
        ax.axhline(0.95, color="gray", ls=":", lw=0.8)
        ax.set_xlabel(label)
        ax.set_ylabel("CDF")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
