"""Colour-coded PNG renderings of depth maps, label maps and error maps.

Depth uses matplotlib's ``turbo`` map over log depth: ``d_max`` maps to the
blue end, ``d_min`` to the red end, so hue falls monotonically as objects
come closer.  Labels use the scene palette.  Error maps run from blue (no
error) to red (error beyond both tolerances) through ``coolwarm``.  Invalid
pixels are black in all three.  Files are plain 8-bit RGB PNGs without
metadata, so identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image

from ..synthdata import PALETTE

DEPTH_CMAP = "turbo"
ERROR_CMAP = "coolwarm"


def _to_u8(rgb) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def colorize_depth(depth, valid=None, d_min: float = 2.0, d_max: float = 80.0) -> np.ndarray:
    """``(H, W)`` metres -> ``(H, W, 3)`` uint8."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = (depth > 0) if valid is None else (np.asarray(valid).astype(bool) & (depth > 0))
    d = np.clip(np.where(valid, depth, d_max), d_min, d_max)
    t = (np.log(d_max) - np.log(d)) / (np.log(d_max) - np.log(d_min))
    rgb = _to_u8(matplotlib.colormaps[DEPTH_CMAP](t)[..., :3])
    rgb[~valid] = 0
    return rgb


def colorize_labels(labels, palette=PALETTE) -> np.ndarray:
    labels = np.asarray(labels).astype(np.int64)
    pal = _to_u8(np.asarray(palette))
    known = (labels >= 0) & (labels < len(pal))
    rgb = pal[np.where(known, labels, 0)]
    rgb[~known] = 0
    return rgb


def colorize_error(scores) -> np.ndarray:
    """Scores in [0, 1] from ``metrics.error_map``; negative means invalid."""
    scores = np.asarray(scores, dtype=np.float64)
    valid = scores >= 0
    rgb = _to_u8(matplotlib.colormaps[ERROR_CMAP](np.clip(scores, 0.0, 1.0))[..., :3])
    rgb[~valid] = 0
    return rgb


def write_png(path, rgb) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")
    return path


def render_outputs(out_dir, stem: str, depth, labels, scores=None, valid=None,
                   d_min: float = 2.0, d_max: float = 80.0) -> list:
    """Write ``<stem>_depth.png``, ``<stem>_labels.png`` and, given scores,
    ``<stem>_error.png``.  Returns the written paths."""
    out = Path(out_dir)
    paths = [write_png(out / f"{stem}_depth.png", colorize_depth(depth, valid, d_min, d_max)),
             write_png(out / f"{stem}_labels.png", colorize_labels(labels))]
    if scores is not None:
        paths.append(write_png(out / f"{stem}_error.png", colorize_error(scores)))
    return paths
