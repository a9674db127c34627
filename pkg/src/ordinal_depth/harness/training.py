"""Single-phase training loop on synthetic data."""

from __future__ import annotations

import csv
import functools
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import codec, losses
from ..discretizer import classes_of_depths
from ..errors import NumericError
from ..network import AdamState, Network, adam_step, checkpoint_hash, save_checkpoint
from ..synthdata import augment, dataset_hash, make_sample, stack
from ..tensorcore import Rng
from . import config as config_io
from .config import ExperimentConfig
from .inference import evaluate

log = logging.getLogger(__name__)

ITER_COLUMNS = ["iteration", "depth_loss", "sem_loss", "lam", "total", "valid_pixel_count"]
EVAL_COLUMNS = ["iteration", "checkpoint", "silog", "ard_pct", "rmse", "irmse", "ard", "srd",
                "rmse_log", "delta1", "delta2", "delta3", "mean_iou", "mean_category_iou",
                "pixel_accuracy", "depth_class_acc"]


@dataclass
class RunLog:
    config_hash: str
    dataset_hash: str
    batch_hash: str = ""   # digest of every training batch consumed
    iterations: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tag = {"config_hash": self.config_hash}
        _write_csv(out / "runlog.csv", ["config_hash"] + ITER_COLUMNS,
                   [{**tag, **r} for r in self.iterations])
        _write_csv(out / "evals.csv", ["config_hash"] + EVAL_COLUMNS,
                   [{**tag, **r} for r in self.evals])
        # wall-clock lives apart from the deterministic logs
        _write_csv(out / "timings.csv", ["iteration", "seconds"], self.timings)
        (out / "hashes.txt").write_text(f"config_hash={self.config_hash}\n"
                                        f"dataset_hash={self.dataset_hash}\n"
                                        f"batch_hash={self.batch_hash}\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


@functools.lru_cache(maxsize=8)
def _splits(ds, n_train):
    train = tuple(make_sample(ds, i) for i in range(n_train))
    evals = tuple(make_sample(ds, i) for i in range(n_train, ds.n))
    return train, evals


def load_splits(cfg: ExperimentConfig):
    """Train samples are indices [0, n_train), eval samples the next n_eval."""
    return _splits(cfg.dataset_spec(), cfg.n_train)


def make_batch(train, rng: Rng, cfg: ExperimentConfig):
    """Random batch with per-sample flip coin and random crop."""
    idx = rng.integers(len(train), (cfg.batch_size,))
    picked = []
    for k, i in enumerate(idx):
        r = rng.split(k)
        flip = bool(cfg.flip and r.random(()) < 0.5)
        picked.append(augment(train[int(i)], flip=flip, crop_size=cfg.crop, rng=r))
    return stack(picked)


def batch_loss(net: Network, cfg: ExperimentConfig, batch, rng: Rng):
    """Forward pass plus objective; returns ``(report, d_depth, d_sem, tape)``."""
    images, depth, _valid, sparse, labels = batch
    spec = cfg.discretization()
    d_logits, s_logits, tape = net.forward(images, "train", rng)
    if cfg.loss_kind == "ordinal":
        cls = classes_of_depths(spec, np.where(sparse, depth, spec.d_max))
        target = codec.encode(cls, spec.m_d)
        report, g_d, g_s = losses.coupled_loss(d_logits, target, sparse, s_logits, labels, cfg.lam)
    else:
        pred = np.exp(d_logits[:, 0])
        l_d, g_pred = losses.mae_regression_loss(pred, depth, sparse)
        g_d = (g_pred * pred)[:, None]
        l_s, g_s = losses.semantic_ce(s_logits, labels)
        g_s = g_s * cfg.lam if cfg.lam != 0 else np.zeros_like(g_s)
        report = losses.total_loss(l_d, l_s, cfg.lam, int(sparse.sum()))
    return report, g_d, g_s, tape


def init_network(cfg: ExperimentConfig) -> Network:
    net = Network(cfg.model_config())
    if cfg.loss_kind == "mae-regression":
        # start the log-depth output at the geometric mean of the range
        net.params["depth.out.bias"][:] = 0.5 * (np.log(cfg.d_min) + np.log(cfg.d_max))
    if cfg.lam == 0:
        # no semantic signal: keep weight decay from moving the head either
        for k in net.trainable:
            if k.startswith("sem."):
                net.trainable[k] = False
    return net


def _dump_failure(out_dir, batch, it):
    d = Path(out_dir) / "failure"
    d.mkdir(parents=True, exist_ok=True)
    names = ("images", "depth", "valid", "sparse_mask", "labels")
    np.savez(d / f"batch_{it:06d}.npz", **dict(zip(names, batch)))
    return d


def _save(net, cfg, directory) -> str:
    """Checkpoint plus the config that rebuilds the network."""
    h = save_checkpoint(net, directory)
    config_io.save(cfg, Path(directory) / "config.txt")
    return h


def train(cfg: ExperimentConfig, write: bool = True, net: Network | None = None):
    """Train from ``cfg``; returns ``(network, RunLog)``.

    Deterministic: batches, crops, flips and dropout masks all come from
    streams split off ``Rng(cfg.seed)``.  Evaluation runs every
    ``eval_every`` iterations and after the last one.
    """
    out_dir = Path(cfg.out_dir)
    train_set, eval_set = load_splits(cfg)
    net = init_network(cfg) if net is None else net
    spec = cfg.discretization()
    regression = cfg.loss_kind == "mae-regression"
    runlog = RunLog(cfg.digest(), dataset_hash(train_set + eval_set))
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        config_io.save(cfg, out_dir / "config.txt")

    root = Rng(cfg.seed)
    batch_rng, drop_rng = root.split(11), root.split(12)
    state = AdamState()
    hyper = cfg.adam()
    batches = hashlib.sha256()

    def run_eval(it):
        res = evaluate(net, eval_set, spec, cfg.eval_cap, regression, m_s=cfg.m_s)
        if write and cfg.save_checkpoints:
            ck = _save(net, cfg, out_dir / "checkpoints" / f"iter_{it:06d}")
        else:
            ck = checkpoint_hash(net)
        r = res.depth
        runlog.evals.append({
            "iteration": it, "checkpoint": ck, "silog": r.silog, "ard_pct": r.ard_pct,
            "rmse": r.rmse, "irmse": r.irmse, "ard": r.ard, "srd": r.srd,
            "rmse_log": r.rmse_log, "delta1": r.delta1, "delta2": r.delta2, "delta3": r.delta3,
            "mean_iou": res.seg.mean_iou, "mean_category_iou": res.seg.mean_category_iou,
            "pixel_accuracy": res.seg.pixel_accuracy, "depth_class_acc": res.depth_class_acc,
        })
        log.info("iter %d: rmse %.3f silog %.2f miou %.3f", it, r.rmse, r.silog, res.seg.mean_iou)
        return res

    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        batch = make_batch(train_set, batch_rng.split(it), cfg)
        for arr in batch:
            batches.update(np.ascontiguousarray(arr).tobytes())
        report, g_d, g_s, tape = batch_loss(net, cfg, batch, drop_rng.split(it))
        if not np.isfinite(report.total):
            where = _dump_failure(out_dir, batch, it)
            raise NumericError(f"non-finite loss at iteration {it}; batch dumped to {where}")
        grads = net.backward(tape, g_d, g_s)
        adam_step(net.params, grads, state, hyper, net.trainable)
        runlog.iterations.append({"iteration": it, **{k: getattr(report, k) for k in
                                  ("depth_loss", "sem_loss", "total", "valid_pixel_count")},
                                  "lam": report.lam})
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            runlog.timings.append({"iteration": it, "seconds": round(time.perf_counter() - t0, 3)})
            run_eval(it)
    if cfg.iterations == 0:
        run_eval(0)
    runlog.batch_hash = batches.hexdigest()[:16]
    if write:
        runlog.write(out_dir)
        _save(net, cfg, out_dir / "final")
    return net, runlog
