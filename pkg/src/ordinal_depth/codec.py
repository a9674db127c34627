"""Ordinal multi-hot encoding, thresholding and leading-run decoding.

Volumes are class-major: ``(m_d, H, W)`` for one image or ``(N, m_d, H, W)``
for a batch.  The class axis is always ``-3``.
"""

from __future__ import annotations

import numpy as np

from .discretizer import DiscretizationSpec, depths_of_classes
from .errors import ArgumentError, ShapeError

THRESHOLD = 0.5


def encode(class_map, m_d: int) -> np.ndarray:
    """Multi-hot prefix targets: bit i (1-based) is set iff i <= class."""
    c = np.asarray(class_map)
    if c.size and (c.min() < 1 or c.max() > m_d):
        raise ArgumentError(f"classes must lie in 1..{m_d}")
    ranks = np.arange(1, m_d + 1).reshape((m_d,) + (1,) * 2)
    return (ranks <= c[..., None, :, :]).astype(np.float64)


def threshold(probs) -> np.ndarray:
    """Step function: 1 where p >= 0.5 (inclusive), else 0."""
    return (np.asarray(probs) >= THRESHOLD).astype(np.float64)


def decode(z) -> np.ndarray:
    """Length of the leading run of ones along the class axis.

    Ones after the first zero are ignored; a zero in the first slot gives
    class 0.
    """
    z = np.asarray(z) > 0.5
    run = np.cumprod(z, axis=-3, dtype=np.int64)
    return run.sum(axis=-3)


def decode_to_depth(probs, spec: DiscretizationSpec):
    """Threshold + decode + class-to-depth lookup.

    Returns ``(depth, valid)``; pixels that decode to class 0 have depth 0
    and ``valid`` False.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim < 3 or probs.shape[-3] != spec.m_d:
        raise ShapeError(f"volume with class axis {probs.shape[-3:-2]} does not match m_d={spec.m_d}")
    classes = decode(threshold(probs))
    valid = classes > 0
    depth = np.where(valid, depths_of_classes(spec, classes), 0.0)
    return depth, valid
