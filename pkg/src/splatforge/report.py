"""Report rendering: delimited tables and matplotlib figures.

Every table lands twice (aligned plain text and TSV) and the figure path
mirrors it as a PNG, so runs can be inspected by eye or diffed by machine.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_table(rows, headers, txt_path=None, tsv_path=None):
    """Render rows (list of dicts) to aligned text and TSV; returns the text."""

    def fmt(value):
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    cells = [[fmt(r.get(h, "")) for h in headers] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    text = "\n".join(lines) + "\n"
    if txt_path:
        Path(txt_path).write_text(text)
    if tsv_path:
        tsv = "\n".join(["\t".join(headers)] + ["\t".join(row) for row in cells]) + "\n"
        Path(tsv_path).write_text(tsv)
    return text


def training_curves_figure(reports, path):
    """Loss curves for a stage-1 run (list of StepReport or dicts)."""
    get = lambda r, k: r[k] if isinstance(r, dict) else getattr(r, k)
    steps = [get(r, "step") for r in reports]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    axes[0, 0].plot(steps, [get(r, "raw_ref_mse") for r in reports])
    axes[0, 0].set_yscale("log")
    axes[0, 0].set_title("reference view MSE (unweighted)")
    axes[0, 1].plot(steps, [get(r, "sds_magnitude") for r in reports])
    axes[0, 1].set_yscale("log")
    axes[0, 1].set_title("guidance residual magnitude")
    axes[1, 0].plot(steps, [get(r, "loss_triplet") for r in reports])
    axes[1, 0].set_title("triplet loss")
    axes[1, 1].plot(steps, [get(r, "n_gaussians") for r in reports])
    axes[1, 1].set_title("cloud size")
    for ax in axes.flat:
        ax.set_xlabel("step")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def refine_curve_figure(reports, path):
    get = lambda r, k: r[k] if isinstance(r, dict) else getattr(r, k)
    losses = [get(r, "loss") for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(losses) + 1), losses, marker="o", ms=3)
    ax.set_xlabel("refine step")
    ax.set_ylabel("per-view MSE")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def eval_views_figure(report, path):
    """Per-view PSNR / perceptual bars for one EvalReport."""
    views = report.views
    labels = [f"{v['azimuth']:.0f}/{v['elevation']:.0f}" for v in views]
    x = np.arange(len(views))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    if views and "psnr" in views[0]:
        ax1.bar(x, [v["psnr"] for v in views], color="#4878d0")
        ax2.bar(x, [v["perceptual"] for v in views], color="#d65f5f")
    elif views and "mesh_psnr" in views[0]:
        ax1.bar(x, [v["mesh_psnr"] for v in views], color="#4878d0")
        ax2.bar(x, [v["mesh_perceptual"] for v in views], color="#d65f5f")
    ax1.set_title("held-out PSNR (dB)")
    ax2.set_title("held-out perceptual distance")
    for ax in (ax1, ax2):
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=45, fontsize=7)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def ablation_figure(rows, path):
    """Grouped bars: mean held-out perceptual distance per variant."""
    variants = [r["variant"] for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(7, 4))
    vals = [r["mean_mesh_perceptual"] for r in rows]
    ax.bar(x, vals, color="#6acc64")
    ax.set_xticks(x)
    ax.set_xticklabels(variants, rotation=20)
    ax.set_ylabel("mean held-out perceptual (mesh)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
