"""Prediction with optional flip-merge, and evaluation over a sample set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import codec, metrics
from ..discretizer import DiscretizationSpec, classes_of_depths
from ..losses import sigmoid, softmax
from ..network import Network
from ..synthdata import CATEGORY_MAP, stack


@dataclass
class Prediction:
    depth: np.ndarray        # (N, H, W) metres
    depth_valid: np.ndarray  # (N, H, W) False where the ordinal decode gave class 0
    labels: np.ndarray       # (N, H, W) argmax semantic class
    depth_volume: np.ndarray  # (N, m_d, H, W) probabilities, or (N, 1, H, W) metres
    sem_volume: np.ndarray   # (N, m_s, H, W) probabilities


def _volumes(net: Network, images, regression: bool):
    depth_logits, sem_logits, _ = net.forward(images, "eval")
    dv = np.exp(depth_logits) if regression else sigmoid(depth_logits)
    return dv, softmax(sem_logits, axis=1)


def infer(net: Network, images, spec: DiscretizationSpec, flip_merge: bool = False,
          regression: bool = False) -> Prediction:
    """Predict depth and labels for ``(N, 3, H, W)`` images.

    With ``flip_merge`` the mirrored image is also run, its volumes are
    mirrored back and averaged with the direct ones before any decoding.
    Pixels whose ordinal code decodes to class 0 are flagged in
    ``depth_valid`` and reported at ``spec.d_max`` (farther than every
    boundary).
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    dv, sv = _volumes(net, images, regression)
    if flip_merge:
        dv_f, sv_f = _volumes(net, images[..., ::-1], regression)
        dv = 0.5 * (dv + dv_f[..., ::-1])
        sv = 0.5 * (sv + sv_f[..., ::-1])
    if regression:
        depth = np.clip(dv[:, 0], spec.d_min, spec.d_max)
        valid = np.ones(depth.shape, bool)
    else:
        depth, valid = codec.decode_to_depth(dv, spec)
        depth = np.where(valid, depth, spec.d_max)
    labels = np.argmax(sv, axis=1)
    return Prediction(depth, valid, labels, dv, sv)


@dataclass
class EvalResult:
    depth: metrics.DepthMetricReport
    per_sample: list
    seg: metrics.SegMetricReport
    depth_class_acc: float | None


def evaluate(net: Network, samples, spec: DiscretizationSpec, cap: float = 80.0,
             regression: bool = False, flip_merge: bool = False, m_s: int = 6,
             chunk: int = 25) -> EvalResult:
    """Dense-ground-truth evaluation; per-image depth metrics are averaged."""
    preds = []
    for i in range(0, len(samples), chunk):
        images = stack(samples[i:i + chunk])[0]
        preds.append(infer(net, images, spec, flip_merge, regression))
    depth = np.concatenate([p.depth for p in preds])
    labels = np.concatenate([p.labels for p in preds])
    _, gt_depth, gt_valid, _, gt_labels = stack(samples)

    per_sample = [metrics.eigen_metrics(depth[k], gt_depth[k], gt_valid[k], cap)
                  for k in range(len(samples))]
    seg = metrics.seg_metrics(labels, gt_labels, m_s, category_map=CATEGORY_MAP)
    acc = None
    if not regression:
        inside = gt_valid & (gt_depth <= cap)
        gt_cls = classes_of_depths(spec, np.where(inside, gt_depth, spec.d_max))
        pred_cls = classes_of_depths(spec, depth)
        acc = float((gt_cls == pred_cls)[inside].mean()) if inside.any() else 0.0
    return EvalResult(metrics.average_reports(per_sample), per_sample, seg, acc)
