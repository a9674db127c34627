"""Semantic cross entropy, ordinal binary cross entropy, the coupled total
loss and the MAE regression baseline, each with its gradient.

Every loss is averaged over valid pixels only and normalised by the class
count, so a semantic pixel contributes ``-(1/M_s) log p_target`` and a depth
pixel ``-(1/M_d) sum_i [t_i log p_i + (1 - t_i) log(1 - p_i)]``.
Invalid pixels receive an exact zero gradient.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError, ShapeError

IGNORE_LABEL = 255
LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossReport:
    depth_loss: float
    sem_loss: float
    lam: float
    total: float
    valid_pixel_count: int

    def as_dict(self) -> dict:
        return asdict(self)


def _batched(x, rank):
    x = np.asarray(x)
    return x[None] if x.ndim == rank - 1 else x


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def softmax(logits, axis=-3):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def semantic_ce(logits, target, ignore_label: int = IGNORE_LABEL):
    """Softmax cross entropy over ``(N, M_s, H, W)`` logits.

    Returns ``(loss, grad)`` with ``grad`` shaped like ``logits``.
    """
    squeeze = np.ndim(logits) == 3
    y = _batched(np.asarray(logits, dtype=np.float64), 4)
    t = _batched(target, 4 - 1).astype(np.int64)
    n, m_s = y.shape[:2]
    if m_s < 2:
        raise ArgumentError("semantic_ce needs at least 2 classes")
    if t.shape != (n,) + y.shape[2:]:
        raise ShapeError(f"labels {t.shape} do not match logits {y.shape}")
    valid = t != ignore_label
    if np.any(valid & ((t < 0) | (t >= m_s))):
        raise ArgumentError(f"labels must lie in 0..{m_s - 1} or equal {ignore_label}")
    n_valid = int(valid.sum())
    grad = np.zeros_like(y)
    if n_valid == 0:
        return 0.0, grad[0] if squeeze else grad

    shifted = y - y.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    safe_t = np.where(valid, t, 0)
    picked = np.take_along_axis(log_p, safe_t[:, None], axis=1)[:, 0]
    loss = -picked[valid].sum() / (m_s * n_valid)

    p = np.exp(log_p)
    onehot = np.zeros_like(y)
    np.put_along_axis(onehot, safe_t[:, None], 1.0, axis=1)
    grad = np.where(valid[:, None], (p - onehot) / (m_s * n_valid), 0.0)
    return float(loss), grad[0] if squeeze else grad


def ordinal_bce(logits, target, mask):
    """Per-class sigmoid BCE over ``(N, M_d, H, W)`` logits.

    Uses ``softplus(y) - t*y`` so no logarithm of zero is ever taken.
    """
    squeeze = np.ndim(logits) == 3
    y = _batched(np.asarray(logits, dtype=np.float64), 4)
    t = _batched(np.asarray(target, dtype=np.float64), 4)
    valid = _batched(np.asarray(mask), 3).astype(bool)
    if t.shape != y.shape or valid.shape != (y.shape[0],) + y.shape[2:]:
        raise ShapeError(f"logits {y.shape}, target {t.shape}, mask {valid.shape} disagree")
    m_d = y.shape[1]
    n_valid = int(valid.sum())
    grad = np.zeros_like(y)
    if n_valid == 0:
        return 0.0, grad[0] if squeeze else grad

    # only valid pixels are evaluated; the rest keep an exact zero gradient
    yv = np.moveaxis(y, 1, -1)[valid]
    tv = np.moveaxis(t, 1, -1)[valid]
    e = np.exp(-np.abs(yv))
    per_bin = np.maximum(yv, 0.0) - tv * yv + np.log1p(e)
    loss = per_bin.sum() / (m_d * n_valid)
    # sigmoid from the same exponential: 1/(1+e) for y >= 0, e/(1+e) otherwise
    p = np.where(yv >= 0, 1.0, e) / (1.0 + e)
    g = np.zeros(valid.shape + (m_d,))
    g[valid] = (p - tv) / (m_d * n_valid)
    grad = np.ascontiguousarray(np.moveaxis(g, -1, 1))
    return float(loss), grad[0] if squeeze else grad


def ordinal_bce_from_probs(probs, target, mask) -> float:
    """Loss value for probabilities given directly (no gradient).

    Each log argument is floored at 1e-12 (never capped), and a term whose
    target weight is zero is skipped, so p == t gives exactly 0.
    """
    p = _batched(np.asarray(probs, dtype=np.float64), 4)
    t = _batched(np.asarray(target, dtype=np.float64), 4)
    valid = _batched(np.asarray(mask), 3).astype(bool)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return 0.0
    pos = np.where(t > 0, t * np.log(np.where(t > 0, np.maximum(p, LOG_EPS), 1.0)), 0.0)
    neg = np.where(t < 1, (1 - t) * np.log(np.where(t < 1, np.maximum(1.0 - p, LOG_EPS), 1.0)), 0.0)
    per_pixel = -(pos + neg).sum(axis=1)
    # -0.0 -> 0.0
    return float(per_pixel[valid].sum() / (p.shape[1] * n_valid)) + 0.0


def total_loss(depth_loss: float, sem_loss: float, lam: float, valid_pixel_count: int = 0) -> LossReport:
    """Coupled objective ``depth + lam * sem``."""
    if lam < 0:
        raise ArgumentError(f"coupling constant must be >= 0, got {lam}")
    return LossReport(
        depth_loss=float(depth_loss),
        sem_loss=float(sem_loss),
        lam=float(lam),
        total=float(depth_loss) + float(lam) * float(sem_loss),
        valid_pixel_count=int(valid_pixel_count),
    )


def coupled_loss(depth_logits, depth_target, depth_mask, sem_logits, sem_target, lam: float,
                 ignore_label: int = IGNORE_LABEL):
    """Evaluate the full objective and both logit gradients.

    Returns ``(report, depth_grad, sem_grad)``.  With ``lam == 0`` the
    semantic gradient is an all-zero buffer (not ``0 * grad``, which can
    carry negative zeros).
    """
    if lam < 0:
        raise ArgumentError(f"coupling constant must be >= 0, got {lam}")
    l_d, g_d = ordinal_bce(depth_logits, depth_target, depth_mask)
    l_s, g_s = semantic_ce(sem_logits, sem_target, ignore_label)
    g_s = g_s * lam if lam != 0 else np.zeros_like(g_s)
    report = total_loss(l_d, l_s, lam, int(np.asarray(depth_mask).astype(bool).sum()))
    return report, g_d, g_s


def mae_regression_loss(pred, gt, mask):
    """Mean absolute depth error over valid pixels and its subgradient."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.asarray(mask).astype(bool)
    if pred.shape != gt.shape or valid.shape != pred.shape:
        raise ShapeError(f"pred {pred.shape}, gt {gt.shape}, mask {valid.shape} disagree")
    n_valid = int(valid.sum())
    grad = np.zeros_like(pred)
    if n_valid == 0:
        return 0.0, grad
    diff = np.where(valid, pred - np.where(valid, gt, 0.0), 0.0)
    loss = np.abs(diff)[valid].sum() / n_valid
    grad = np.where(valid, np.sign(diff) / n_valid, 0.0)
    return float(loss), grad
