"""Depth and segmentation evaluation.

Depth metrics, over valid pixels with ground truth g in (0, cap] and the
prediction p clipped to [1e-3, cap]::

    ARD      = mean |p - g| / g
    SRD      = mean (p - g)^2 / g
    RMSE     = sqrt(mean (p - g)^2)
    RMSE_log = sqrt(mean (log p - log g)^2)
    delta_k  = fraction with max(p/g, g/p) < 1.25^k        (strict)
    SiLog    = 100 * sqrt(mean (d - mean d)^2),  d = log p - log g
    ARD%     = 100 * ARD,   SRD% = 100 * SRD
    iRMSE    = 1000 * sqrt(mean (1/p - 1/g)^2)               [1/km]

SiLog uses the centred (two-pass) variance, which equals
mean d^2 - (mean d)^2 exactly in real arithmetic but does not cancel
catastrophically for near-constant d.  All means are taken with
``math.fsum`` so the result does not depend on summation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ArgumentError, ShapeError

MIN_DEPTH = 1e-3
DELTA_BASE = 1.25
IGNORE_LABEL = 255


@dataclass(frozen=True)
class DepthMetricReport:
    ard: float = 0.0
    srd: float = 0.0
    rmse: float = 0.0
    rmse_log: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 0.0
    silog: float = 0.0
    ard_pct: float = 0.0
    srd_pct: float = 0.0
    irmse: float = 0.0
    n_valid: int = 0

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


def _mean(values) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    return math.fsum(values) / values.size


def _check(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.ones(gt.shape, bool) if mask is None else np.asarray(mask).astype(bool)
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ShapeError(f"pred {pred.shape}, gt {gt.shape}, mask {mask.shape} disagree")
    return pred, gt, mask


def _report(p, g) -> DepthMetricReport:
    """Metrics over flat arrays of already-filtered depths."""
    diff = p - g
    ard = _mean(np.abs(diff) / g)
    srd = _mean(diff * diff / g)
    rmse = math.sqrt(_mean(diff * diff))
    d = np.log(p) - np.log(g)
    rmse_log = math.sqrt(_mean(d * d))
    ratio = np.maximum(p / g, g / p)
    deltas = [_mean(ratio < DELTA_BASE ** k) for k in (1, 2, 3)]
    dc = d - _mean(d)
    silog = 100.0 * math.sqrt(_mean(dc * dc))
    inv = 1.0 / p - 1.0 / g
    irmse = 1000.0 * math.sqrt(_mean(inv * inv))
    return DepthMetricReport(ard, srd, rmse, rmse_log, *deltas, silog,
                             100.0 * ard, 100.0 * srd, irmse, int(p.size))


def eigen_metrics(pred, gt, mask=None, cap: float = 80.0) -> DepthMetricReport:
    """Full depth report over pixels with 0 < gt <= cap."""
    pred, gt, mask = _check(pred, gt, mask)
    valid = mask & (gt > 0) & (gt <= cap)
    if not valid.any():
        return DepthMetricReport()
    p = np.clip(pred[valid], MIN_DEPTH, cap)
    return _report(p, gt[valid])


def kitti_dp_metrics(pred, gt, mask=None):
    """``(silog, srd_pct, ard_pct, irmse)`` without any depth cap."""
    pred, gt, mask = _check(pred, gt, mask)
    if np.any(pred[mask] <= 0) or np.any(gt[mask] <= 0):
        raise ArgumentError("depths must be positive on valid pixels")
    if not mask.any():
        return 0.0, 0.0, 0.0, 0.0
    r = _report(pred[mask], gt[mask])
    return r.silog, r.srd_pct, r.ard_pct, r.irmse


def average_reports(reports) -> DepthMetricReport:
    """Per-image mean of each metric (images without valid pixels skipped)."""
    reports = [r for r in reports if r.n_valid > 0]
    if not reports:
        return DepthMetricReport()
    names = DepthMetricReport.columns()[:-1]
    avg = {n: math.fsum(getattr(r, n) for r in reports) / len(reports) for n in names}
    return DepthMetricReport(**avg, n_valid=sum(r.n_valid for r in reports))


def write_depth_csv(path, reports, ids=None) -> None:
    """One row per sample followed by an ``aggregate`` row."""
    ids = list(range(len(reports))) if ids is None else list(ids)
    cols = DepthMetricReport.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + cols)
        for i, r in zip(ids, reports):
            w.writerow([i] + [_fmt(getattr(r, c)) for c in cols])
        agg = average_reports(reports)
        w.writerow(["aggregate"] + [_fmt(getattr(agg, c)) for c in cols])


def _fmt(v):
    return v if isinstance(v, (int, np.integer)) else repr(float(v))


# ------------------------------------------------------------ segmentation

@dataclass(frozen=True)
class SegMetricReport:
    iou: np.ndarray
    mean_iou: float
    category_iou: np.ndarray | None
    mean_category_iou: float | None
    confusion: np.ndarray
    pixel_accuracy: float


def confusion_matrix(pred, gt, n_classes: int, ignore_label: int = IGNORE_LABEL) -> np.ndarray:
    """Counts with rows = ground truth, columns = prediction."""
    pred = np.asarray(pred).astype(np.int64).ravel()
    gt = np.asarray(gt).astype(np.int64).ravel()
    if pred.shape != gt.shape:
        raise ShapeError("pred and gt label maps differ in size")
    keep = (gt != ignore_label) & (gt >= 0) & (gt < n_classes) & (pred >= 0) & (pred < n_classes)
    idx = gt[keep] * n_classes + pred[keep]
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def iou_from_confusion(cm: np.ndarray, missed=None):
    """Per-class IoU (NaN where the class is absent from pred and gt) and mean."""
    tp = np.diag(cm).astype(np.float64)
    fn = cm.sum(axis=1) - tp
    if missed is not None:
        fn = fn + missed
    fp = cm.sum(axis=0) - tp
    union = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / np.where(union > 0, union, 1), np.nan)
    present = union > 0
    mean = float(np.mean(iou[present])) if present.any() else 0.0
    return iou, mean


def seg_metrics(pred, gt, n_classes: int, ignore_label: int = IGNORE_LABEL,
                category_map=None) -> SegMetricReport:
    """Class (and optional category) IoU.

    Ground-truth pixels equal to ``ignore_label`` are skipped.  A valid
    ground-truth pixel whose prediction is out of range counts as a miss for
    its class.  ``category_map[c]`` gives the category of class ``c``.
    """
    pred = np.asarray(pred).astype(np.int64)
    gt = np.asarray(gt).astype(np.int64)
    if pred.shape != gt.shape:
        raise ShapeError("pred and gt label maps differ in size")
    valid_gt = (gt != ignore_label) & (gt >= 0) & (gt < n_classes)
    bad_pred = valid_gt & ((pred < 0) | (pred >= n_classes))
    missed = np.bincount(gt[bad_pred], minlength=n_classes)
    cm = confusion_matrix(pred, gt, n_classes, ignore_label)
    iou, mean_iou = iou_from_confusion(cm, missed)
    n = int(valid_gt.sum())
    acc = float(np.trace(cm) / n) if n else 0.0

    cat_iou = mean_cat = None
    if category_map is not None:
        cmap = np.asarray(category_map, dtype=np.int64)
        n_cat = int(cmap.max()) + 1
        to_cat = np.zeros((n_classes, n_cat))
        to_cat[np.arange(n_classes), cmap] = 1.0
        cat_cm = (to_cat.T @ cm @ to_cat).astype(np.int64)
        cat_missed = to_cat.T @ missed
        cat_iou, mean_cat = iou_from_confusion(cat_cm, cat_missed)
    return SegMetricReport(iou, mean_iou, cat_iou, mean_cat, cm, acc)


# -------------------------------------------------------------- error maps

INVALID_SCORE = -1.0


def error_map(pred, gt, mask=None, relative_threshold: float = 0.05,
              absolute_threshold: float = 3.0) -> np.ndarray:
    """Per-pixel error score in [0, 1]; invalid pixels carry -1.

    A pixel's tolerance is ``max(absolute_threshold, relative_threshold * gt)``;
    the score is ``min(1, |pred - gt| / tolerance)``, so it saturates at 1
    exactly when the error exceeds both thresholds.
    """
    pred, gt, mask = _check(pred, gt, mask)
    valid = mask & (gt > 0)
    tol = np.maximum(absolute_threshold, relative_threshold * gt)
    score = np.minimum(1.0, np.abs(pred - gt) / tol)
    return np.where(valid, score, INVALID_SCORE)


def d1_fraction(scores) -> float:
    """Share of valid pixels whose error exceeds both thresholds."""
    scores = np.asarray(scores)
    valid = scores >= 0
    return float((scores[valid] >= 1.0).mean()) if valid.any() else 0.0
