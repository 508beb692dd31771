"""Volume estimates of the true reachable set from Monte-Carlo successors.

An interval over-approximation is compared against the volume of the set
it encloses. The interval hull of the samples is a poor stand-in: with
sign-stable sensitivities the exact interval hull of the reachable set is
what the over-approximation already computes, so the ratio would sit near
1 by construction. The convex hull of the samples follows the set itself
and is used whenever qhull can handle the dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

__all__ = ["VolumeEstimate", "affine_dimension", "interval_hull_volume", "reachable_volume", "volume_ratio"]

# qhull cost grows quickly with dimension; beyond this fall back to the interval hull
MAX_CONVEX_HULL_DIM = 6


@dataclass(frozen=True)
class VolumeEstimate:
    volume: float
    method: str
    affine_dim: int
    n_points: int

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "method": self.method,
            "affine_dim": self.affine_dim,
            "n_points": self.n_points,
        }


def affine_dimension(points, rtol: float = 1e-9) -> int:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        return 0
    centered = pts - pts.mean(axis=0)
    scale = np.abs(pts).max(axis=0)
    scale[scale == 0] = 1.0
    sv = np.linalg.svd(centered / scale, compute_uv=False)
    return int(np.sum(sv > rtol * max(sv[0], np.finfo(float).tiny) * len(pts)))


def interval_hull_volume(points) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.prod(pts.max(axis=0) - pts.min(axis=0)))


def reachable_volume(points, method: str = "auto") -> VolumeEstimate:
    """Volume of the set sampled by ``points`` (rows are successors).

    ``method`` is ``"convex-hull"``, ``"interval-hull"`` or ``"auto"``
    (convex hull up to ``MAX_CONVEX_HULL_DIM`` dimensions). Samples that span
    a lower-dimensional affine set have volume 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    if method not in ("auto", "convex-hull", "interval-hull"):
        raise ValueError(f"unknown volume method {method!r}")
    if method == "auto":
        method = "convex-hull" if n <= MAX_CONVEX_HULL_DIM else "interval-hull"
    dim = affine_dimension(pts)
    if dim < n:
        return VolumeEstimate(0.0, method, dim, len(pts))
    if method == "interval-hull":
        return VolumeEstimate(interval_hull_volume(pts), method, dim, len(pts))
    try:
        vol = float(ConvexHull(pts).volume)
    except QhullError as exc:
        raise ValueError(f"convex hull failed: {exc}") from exc
    return VolumeEstimate(vol, method, dim, len(pts))


def volume_ratio(box_volume: float, estimate: VolumeEstimate) -> float | None:
    """``box_volume / estimate.volume``, or None when the sampled set has no volume."""
    if estimate.volume <= 0.0:
        return None
    return float(box_volume) / estimate.volume
