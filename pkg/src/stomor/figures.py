"""Matplotlib rendering of validation reports to image files.

Everything draws through the Agg backend and goes straight to disk next to
the CSV output; no window is ever opened.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["render_validation_figures"]


def _error_figure(report, path):
    fig, (ax_mean, ax_var) = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
    ax_mean.plot(report.times, report.mean_abs_err, color="tab:blue", lw=1.0)
    ax_mean.fill_between(report.times, report.ci_lower, report.ci_upper,
                         color="tab:blue", alpha=0.25, linewidth=0)
    ax_mean.set_ylabel("mean |e(t)|")
    ax_mean.set_title(f"absolute matching error over {report.n_paths} paths")
    ax_var.plot(report.times, report.var_abs_err, color="tab:red", lw=1.0)
    ax_var.set_ylabel("var |e(t)|")
    ax_var.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _ecdf_figure(report, path):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for pt in report.probe_times:
        samples = report.ecdf[pt]
        if len(samples) == 0:
            continue
        levels = (1.0 + np.arange(len(samples))) / len(samples)
        ax.step(samples, levels, where="post", label=f"t = {pt:g} s")
    ax.set_xlabel("|e|")
    ax.set_ylabel("empirical CDF")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title("error distribution at probe times")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _trajectory_figure(report, path):
    n_samples = report.sample_outputs.shape[0]
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 5.0), sharex=True)
    for i in range(n_samples):
        axes[0].plot(report.sample_times, report.sample_outputs[i],
                     lw=0.8, color="tab:blue", alpha=0.8,
                     label="system" if i == 0 else None)
        axes[0].plot(report.sample_times, report.sample_rom_outputs[i],
                     lw=0.8, color="tab:red", ls="--", alpha=0.8,
                     label="reduced model" if i == 0 else None)
        err = abs(report.sample_outputs[i] - report.sample_rom_outputs[i])
        axes[1].plot(report.sample_times, err, lw=0.8, alpha=0.8)
    axes[0].set_ylabel("output")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[0].set_title(f"sample realizations ({n_samples} paths)")
    axes[1].set_ylabel("|e(t)|")
    axes[1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_validation_figures(report, out_dir):
    """Render errors.png, ecdf.png and (when samples exist) trajectories.png.

    Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "errors.png"
    _error_figure(report, path)
    written.append(path)
    if report.probe_times:
        path = out_dir / "ecdf.png"
        _ecdf_figure(report, path)
        written.append(path)
    if report.sample_outputs is not None:
        path = out_dir / "trajectories.png"
        _trajectory_figure(report, path)
        written.append(path)
    return written
