"""Depth <-> ordinal class mapping.

Classes are numbered 1..m_d.  Class 1 is the farthest depth (smallest inverse
depth rho_min = 1/d_max) and class m_d the nearest (rho_max = 1/d_min), so a
multi-hot prefix of length c reads "at least as close as boundary c".

Three boundary schemes are supported:

``exponential-inverse``
    c_i = rho_min * exp(log(rho_max / rho_min) * (i - 1) / (m_d - 1)),
    i.e. uniform spacing in log inverse depth.
``linear-inverse``
    uniform spacing in rho.
``linear-depth``
    uniform spacing in metric depth d, expressed as rho = 1/d.

A depth is assigned to the boundary nearest to it in the scheme's natural
coordinate: log(rho), rho and d respectively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ShapeError

SCHEMES = ("exponential-inverse", "linear-depth", "linear-inverse")


@dataclass(frozen=True)
class DiscretizationSpec:
    d_min: float = 2.0
    d_max: float = 80.0
    m_d: int = 128
    scheme: str = "exponential-inverse"

    def __post_init__(self):
        if not (self.d_min > 0 and self.d_min < self.d_max and np.isfinite(self.d_max)):
            raise ArgumentError(f"need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]")
        if int(self.m_d) != self.m_d or self.m_d < 2:
            raise ArgumentError(f"m_d must be an integer >= 2, got {self.m_d}")
        if self.scheme not in SCHEMES:
            raise ArgumentError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def rho_min(self) -> float:
        return 1.0 / self.d_max

    @property
    def rho_max(self) -> float:
        return 1.0 / self.d_min


def class_boundaries(spec: DiscretizationSpec) -> np.ndarray:
    """Inverse-depth boundaries c_1 < ... < c_{m_d}, returned 0-indexed."""
    m = spec.m_d
    t = np.arange(m, dtype=np.float64) / (m - 1)
    if spec.scheme == "exponential-inverse":
        c = spec.rho_min * np.exp(np.log(spec.rho_max / spec.rho_min) * t)
    elif spec.scheme == "linear-inverse":
        c = spec.rho_min + (spec.rho_max - spec.rho_min) * t
    else:
        # boundaries evenly spaced in depth, far to near
        c = 1.0 / (spec.d_max - (spec.d_max - spec.d_min) * t)
    # pin the end points exactly; exp/log round-trips can be off by an ulp
    c[0] = spec.rho_min
    c[-1] = spec.rho_max
    return c


def _coordinate(spec: DiscretizationSpec, rho):
    if spec.scheme == "exponential-inverse":
        return np.log(rho)
    if spec.scheme == "linear-inverse":
        return np.asarray(rho, dtype=np.float64)
    return 1.0 / np.asarray(rho, dtype=np.float64)


def classes_of_depths(spec: DiscretizationSpec, depths) -> np.ndarray:
    """Vectorised ``class_of_depth``; returns int64 classes in 1..m_d."""
    d = np.asarray(depths, dtype=np.float64)
    if np.any(~(d > 0)):
        raise ArgumentError("depths must be > 0")
    d = np.clip(d, spec.d_min, spec.d_max)
    bounds = _coordinate(spec, class_boundaries(spec))
    x = _coordinate(spec, 1.0 / d)
    # boundaries are increasing in log rho and rho, decreasing in d
    if spec.scheme == "linear-depth":
        bounds, x = -bounds, -x
    hi = np.clip(np.searchsorted(bounds, x, side="left"), 1, spec.m_d - 1)
    lo = hi - 1
    # ties go to the nearer-depth (higher) class
    pick_hi = (bounds[hi] - x) <= (x - bounds[lo])
    return np.where(pick_hi, hi, lo).astype(np.int64) + 1


def class_of_depth(spec: DiscretizationSpec, d: float) -> int:
    if not d > 0:
        raise ArgumentError(f"depth must be > 0, got {d}")
    return int(classes_of_depths(spec, np.array([d]))[0])


def depth_of_class(spec: DiscretizationSpec, i: int) -> float:
    if not (int(i) == i and 1 <= i <= spec.m_d):
        raise ArgumentError(f"class index {i} outside 1..{spec.m_d}")
    return float(1.0 / class_boundaries(spec)[int(i) - 1])


def depths_of_classes(spec: DiscretizationSpec, classes) -> np.ndarray:
    """Vectorised ``depth_of_class``; class 0 maps to NaN."""
    c = np.asarray(classes, dtype=np.int64)
    if np.any((c < 0) | (c > spec.m_d)):
        raise ArgumentError(f"class index outside 0..{spec.m_d}")
    table = np.concatenate([[np.nan], 1.0 / class_boundaries(spec)])
    return table[c]


def class_histogram(spec: DiscretizationSpec, depths, mask) -> np.ndarray:
    """Relative class frequencies over masked-in pixels (index 0 = class 1)."""
    depths = np.asarray(depths, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if depths.shape != mask.shape:
        raise ShapeError(f"depths {depths.shape} and mask {mask.shape} differ")
    hist = np.zeros(spec.m_d)
    if not mask.any():
        return hist
    cls = classes_of_depths(spec, depths[mask])
    hist += np.bincount(cls - 1, minlength=spec.m_d)
    return hist / hist.sum()


def kl_to_uniform(hist) -> float:
    """KL(hist || uniform) in nats; empty bins contribute zero."""
    p = np.asarray(hist, dtype=np.float64)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] * p.size)))


def sample_inverse_square(rng, n: int, d_min: float = 2.0, d_max: float = 80.0) -> np.ndarray:
    """Depths with density proportional to 1/d^2 on [d_min, d_max].

    The CDF is (1/d_min - 1/d) / (1/d_min - 1/d_max), so inverse depth is
    uniform and d = 1 / (1/d_min - u (1/d_min - 1/d_max)).
    """
    u = rng.random((n,))
    return 1.0 / (1.0 / d_min - u * (1.0 / d_min - 1.0 / d_max))
