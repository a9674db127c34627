"""Controlled one-axis comparisons against a base configuration.

Every variant of an axis is trained on the same dataset with the same seed
(hence the same batches, crops and flips) and evaluated on the same split.
The result is one CSV row per (variant, seed).  Semantic metrics are left
blank for variants whose semantic head receives no training signal
(``lam == 0``), and depth-class accuracy is blank for the regression head.
"""

from __future__ import annotations

import csv
from pathlib import Path

from ..errors import ConfigError
from .config import ExperimentConfig
from .training import train

AXES = {
    "semantic-loss": [("lam=0", {"lam": 0.0}), ("lam=10", {"lam": 10.0})],
    "loss-kind": [("ordinal", {"loss_kind": "ordinal"}), ("mae", {"loss_kind": "mae-regression"})],
    "m-depth": [(f"m_d={m}", {"m_d": m}) for m in (96, 128, 160)],
    "norm-kind": [("group", {"norm_kind": "group"}), ("batch", {"norm_kind": "batch"})],
}

COLUMNS = ["axis", "variant", "seed", "config_hash", "dataset_hash", "batch_hash", "iterations",
           "silog", "ard_pct", "rmse", "irmse", "depth_class_acc", "sem_acc", "sem_mean_iou"]


def variants(base: ExperimentConfig, axis: str):
    if axis not in AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(AXES)}")
    return [(name, base.replace(**changes)) for name, changes in AXES[axis]]


def row_for(axis: str, name: str, cfg: ExperimentConfig, runlog) -> dict:
    last = runlog.evals[-1]
    semantic = cfg.lam > 0
    return {
        "axis": axis, "variant": name, "seed": cfg.seed, "config_hash": runlog.config_hash,
        "dataset_hash": runlog.dataset_hash, "batch_hash": runlog.batch_hash,
        "iterations": cfg.iterations, "silog": last["silog"], "ard_pct": last["ard_pct"],
        "rmse": last["rmse"], "irmse": last["irmse"], "depth_class_acc": last["depth_class_acc"],
        "sem_acc": last["pixel_accuracy"] if semantic else None,
        "sem_mean_iou": last["mean_iou"] if semantic else None,
    }


def ablate(base: ExperimentConfig, axis: str, out_dir=None, seeds=None, write: bool = True):
    """Train every variant of ``axis`` for each seed; returns the row dicts."""
    out = Path(out_dir or base.out_dir)
    seeds = [base.seed] if seeds is None else list(seeds)
    rows = []
    for seed in seeds:
        for name, cfg in variants(base.replace(seed=seed), axis):
            run_dir = out / axis / f"{name}_seed{seed}"
            cfg = cfg.replace(out_dir=str(run_dir))
            _, runlog = train(cfg, write=write)
            rows.append(row_for(axis, name, cfg, runlog))
    if write:
        write_rows(out / f"ablation_{axis}.csv", rows)
    return rows


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_rows(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in COLUMNS])
