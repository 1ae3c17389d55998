"""Signed Euclidean distance transform grids for collision queries.

Occupancy is voxelized from a point cloud; the exact squared-distance
transform (separable, per-axis) comes from scipy.ndimage. Distances are
positive in free space, negative inside occupied voxels, and queried with
trilinear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    cloud_id: str = ""
    frame: str = "world"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


class EDTGrid:
    """Signed Euclidean distance field on a regular voxel grid."""

    def __init__(self, origin: np.ndarray, resolution: float, distances: np.ndarray,
                 occupancy: np.ndarray, source_id: str = ""):
        self.origin = np.asarray(origin, dtype=float)
        self.resolution = float(resolution)
        self.distances = distances
        self.occupancy = occupancy
        self.source_id = source_id
        self.shape = distances.shape

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.origin, self.origin + np.asarray(self.shape) * self.resolution

    def voxel_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def query(self, points: np.ndarray) -> np.ndarray:
        """Trilinearly interpolated signed distance at world points.

        Points outside the grid are clamped to the border value, which is
        conservative toward obstacles near the boundary; callers should size
        the grid to cover the workspace.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        # continuous voxel coordinates of the sample in cell-center space
        c = (p - self.origin) / self.resolution - 0.5
        out = np.empty(len(p))
        maxi = np.asarray(self.shape) - 1
        c = np.clip(c, 0.0, maxi - 1e-9)
        i0 = np.floor(c).astype(int)
        i0 = np.minimum(i0, maxi - 1)
        f = c - i0
        d = self.distances
        x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        c00 = d[x0, y0, z0] * (1 - fx) + d[x0 + 1, y0, z0] * fx
        c01 = d[x0, y0, z0 + 1] * (1 - fx) + d[x0 + 1, y0, z0 + 1] * fx
        c10 = d[x0, y0 + 1, z0] * (1 - fx) + d[x0 + 1, y0 + 1, z0] * fx
        c11 = d[x0, y0 + 1, z0 + 1] * (1 - fx) + d[x0 + 1, y0 + 1, z0 + 1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        out = c0 * (1 - fz) + c1 * fz
        return out

    def query_one(self, point) -> float:
        return float(self.query(np.asarray(point).reshape(1, 3))[0])


def build_edt(cloud: PointCloud, resolution: float, bounds: tuple) -> EDTGrid:
    """Voxelize a cloud and compute its signed exact EDT.

    ``bounds`` is (min_corner, max_corner) in world coordinates. Points
    outside the bounds are ignored; the cloud must leave at least one point
    inside.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("empty bounds")
    shape = np.maximum(np.ceil((hi - lo) / resolution).astype(int), 1)
    pts = cloud.points
    inside = np.all((pts >= lo) & (pts < lo + shape * resolution), axis=1)
    pts = pts[inside]
    if len(pts) == 0:
        raise ValueError("no cloud points inside bounds")
    idx = np.floor((pts - lo) / resolution).astype(int)
    occ = np.zeros(shape, dtype=bool)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    # distance (in voxels) from free voxels to the nearest occupied one, and
    # from occupied voxels to the nearest free one; both exact
    d_out = ndimage.distance_transform_edt(~occ)
    d_in = ndimage.distance_transform_edt(occ)
    signed = (d_out - d_in) * resolution
    return EDTGrid(lo, resolution, signed, occ, source_id=cloud.cloud_id)


def build_edt_from_occupancy(occ: np.ndarray, origin, resolution: float,
                             source_id: str = "") -> EDTGrid:
    """Signed EDT directly from a boolean occupancy grid."""
    d_out = ndimage.distance_transform_edt(~occ)
    d_in = ndimage.distance_transform_edt(occ)
    return EDTGrid(np.asarray(origin, dtype=float), resolution,
                   (d_out - d_in) * resolution, occ, source_id=source_id)


def brute_force_distance(grid: EDTGrid, point: np.ndarray) -> float:
    """O(n) oracle: signed distance to the nearest occupied/free voxel center."""
    occ_idx = np.argwhere(grid.occupancy)
    centers = grid.origin + (occ_idx + 0.5) * grid.resolution
    point = np.asarray(point, dtype=float)
    # which voxel holds the point
    i = np.floor((point - grid.origin) / grid.resolution).astype(int)
    i = np.clip(i, 0, np.asarray(grid.shape) - 1)
    if grid.occupancy[tuple(i)]:
        free_idx = np.argwhere(~grid.occupancy)
        if len(free_idx) == 0:
            return -np.inf
        free_centers = grid.origin + (free_idx + 0.5) * grid.resolution
        own = grid.voxel_center(i)
        return -float(np.min(np.linalg.norm(free_centers - own, axis=1)))
    own = grid.voxel_center(i)
    return float(np.min(np.linalg.norm(centers - own, axis=1)))
