"""Report figures (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..discretizer import (  # noqa: E402
    DiscretizationSpec, class_histogram, depths_of_classes, kl_to_uniform,
)

_SAVE = dict(dpi=100, metadata={"Software": None})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def training_curves(iterations, evals, path) -> Path:
    """Loss components per iteration and eval RMSE / SiLog per checkpoint."""
    fig, (ax_l, ax_e) = plt.subplots(1, 2, figsize=(10, 3.6))
    it = [r["iteration"] for r in iterations]
    for key in ("depth_loss", "sem_loss", "total"):
        ax_l.plot(it, [r[key] for r in iterations], label=key, lw=0.8)
    ax_l.set_yscale("log")
    ax_l.set_xlabel("iteration")
    ax_l.legend()
    ev_it = [r["iteration"] for r in evals]
    ax_e.plot(ev_it, [r["rmse"] for r in evals], "o-", label="RMSE [m]")
    ax_s = ax_e.twinx()
    ax_s.plot(ev_it, [r["silog"] for r in evals], "s--", color="tab:red", label="SiLog")
    ax_e.set_xlabel("iteration")
    ax_e.set_ylabel("RMSE [m]")
    ax_s.set_ylabel("SiLog")
    fig.tight_layout()
    return _save(fig, path)


def ablation_bars(rows, path, metric: str = "rmse") -> Path:
    """One bar per variant (mean over seeds, with min/max whiskers)."""
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    vals = [[float(r[metric]) for r in rows if r["variant"] == v] for v in variants]
    means = np.array([np.mean(v) for v in vals])
    lo = means - np.array([min(v) for v in vals])
    hi = np.array([max(v) for v in vals]) - means
    fig, ax = plt.subplots(figsize=(1.4 * len(variants) + 2, 3.4))
    ax.bar(variants, means, yerr=[lo, hi], capsize=4, color="tab:blue")
    ax.set_ylabel(metric)
    fig.tight_layout()
    return _save(fig, path)


def class_histograms(depths, valid, specs: dict[str, DiscretizationSpec], path) -> Path:
    """Class occupancy of the same depths under several discretisations.

    Bins are placed at their class depth, so the axis reads near to far
    whatever the index convention.
    """
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for name, spec in specs.items():
        h = class_histogram(spec, depths, valid)
        centres = depths_of_classes(spec, np.arange(1, spec.m_d + 1))
        ax.step(centres, h, where="mid", label=f"{name} (KL {kl_to_uniform(h):.3f})")
    ax.set_xscale("log")
    ax.set_xlabel("class depth [m]")
    ax.set_ylabel("fraction of pixels")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
