"""Density map -> compact weighted point cloud via weighted k-means."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import DensityMap


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray           # (k, 3) world coordinates (A)
    weights: np.ndarray = field(default=None)  # (k,) normalized to sum 1

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("point cloud must contain at least one point")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite coordinates")
        w = self.weights
        if w is None:
            w = np.ones(len(pts))
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if len(w) != len(pts):
            raise ValueError(f"{len(w)} weights for {len(pts)} points")
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w / w.sum())

    def __len__(self) -> int:
        return len(self.points)


def cluster_count(n_atoms: int, voxel_size: float) -> int:
    """Number of cluster centers: max(1, floor(n_atoms / (4 voxel_size^3)))."""
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    if not voxel_size > 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    return max(1, int(n_atoms / (4.0 * voxel_size ** 3)))


def _kmeans_once(pts, w, k, rng):
    # weighted k-means++ seeding
    centers = np.empty((k, 3))
    centers[0] = pts[rng.choice(len(pts), p=w / w.sum())]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        p = w * d2
        total = p.sum()
        if total <= 0:  # all mass already on chosen centers
            centers[j] = pts[rng.integers(len(pts))]
        else:
            centers[j] = pts[rng.choice(len(pts), p=p / total)]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))

    for _ in range(100):
        dist2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist2, axis=1)       # ties -> lowest cluster index
        new_centers = centers.copy()
        for j in range(k):
            sel = labels == j
            if sel.any():
                new_centers[j] = np.average(pts[sel], axis=0, weights=w[sel])
            else:
                # repair: move to the highest-weighted, worst-fit voxel
                worst = np.argmax(w * dist2[np.arange(len(pts)), labels])
                new_centers[j] = pts[worst]
        if np.max(np.abs(new_centers - centers)) < 1e-4:
            centers = new_centers
            break
        centers = new_centers
    dist2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(dist2, axis=1)
    objective = float(np.sum(w * dist2[np.arange(len(pts)), labels]))
    return centers, labels, objective


def extract_pointcloud(dmap: DensityMap, k: int, seed: int = 0,
                       restarts: int = 10) -> PointCloud:
    """Weighted k-means (k-means++ seeding, best of `restarts`) over positive voxels.

    Point weights are each cluster's share of total intensity.
    """
    pos = dmap.data > 0
    n_pos = int(pos.sum())
    if n_pos < k:
        raise ValueError(f"extract_pointcloud: {n_pos} positive voxels < k = {k}")
    idx = np.argwhere(pos)
    pts = idx * dmap.voxel_size + dmap.origin
    w = dmap.data[pos]

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers, labels, obj = _kmeans_once(pts, w, k, rng)
        if best is None or obj < best[2]:
            best = (centers, labels, obj)
    centers, labels, _ = best
    shares = np.array([w[labels == j].sum() for j in range(k)])
    return PointCloud(points=centers, weights=shares)


def kmeans_objective(dmap: DensityMap, centers: np.ndarray) -> float:
    """Weighted assignment objective of `centers` on the map's positive voxels."""
    pos = dmap.data > 0
    pts = np.argwhere(pos) * dmap.voxel_size + dmap.origin
    w = dmap.data[pos]
    dist2 = np.sum((pts[:, None, :] - np.asarray(centers)[None, :, :]) ** 2, axis=2)
    return float(np.sum(w * dist2.min(axis=1)))
