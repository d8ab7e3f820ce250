"""
Point Processor Module
Handles normalization of point clouds into the unit cube and k-NN normal estimation
"""

import sys
from typing import Optional

import numpy as np
from sklearn.neighbors import NearestNeighbors

from errors import EmptyCloudError, InsufficientPointsError
from utils.data_loader import PointCloud


class PointProcessor:
    """Prepare point clouds for gridding"""

    @staticmethod
    def normalize_to_unit_cube(cloud: PointCloud) -> PointCloud:
        """
        Scale and translate a cloud so its bounding box fits [0, 1]^3

        A single scale factor is used on every axis; the longest axis ends up
        spanning exactly [0, 1]. A cloud whose points are all identical is
        centered at (0.5, 0.5, 0.5) with scale 1 and flagged degenerate.

        Args:
            cloud: Point cloud in any units

        Returns:
            New PointCloud with scale/offset metadata; normals unchanged
        """
        if len(cloud) == 0:
            raise EmptyCloudError("Cannot normalize an empty point cloud")

        lower = cloud.points.min(axis=0)
        upper = cloud.points.max(axis=0)
        extent = float((upper - lower).max())

        # Compose with any earlier normalization so denormalize still reaches the raw units
        prior_scale = cloud.scale
        prior_offset = cloud.offset

        if extent == 0.0:
            offset = lower - 0.5
            points = np.full_like(cloud.points, 0.5)
            scale = 1.0
            degenerate = True
        else:
            offset = lower
            points = (cloud.points - lower) / extent
            scale = 1.0 / extent
            degenerate = False

        return PointCloud(
            points=points,
            normals=None if cloud.normals is None else cloud.normals.copy(),
            source_bounds=cloud.source_bounds,
            scale=prior_scale * scale,
            offset=prior_offset + offset / prior_scale,
            degenerate=degenerate,
        )

    @staticmethod
    def denormalize(cloud: PointCloud, points: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Map normalized coordinates back to the original units

        Args:
            cloud: Normalized cloud carrying scale/offset
            points: Coordinates to map (defaults to the cloud's own points)

        Returns:
            (N, 3) array in original units
        """
        pts = cloud.points if points is None else np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts / cloud.scale + cloud.offset

    @staticmethod
    def estimate_normals(cloud: PointCloud, k: int = 10, threads: int = 1,
                         show_progress: bool = False) -> PointCloud:
        """
        Estimate unit normals from the covariance of each point's k nearest neighbors

        The neighborhood includes the point itself. The normal is the
        eigenvector of the smallest covariance eigenvalue, flipped so it points
        away from the neighborhood centroid.

        Args:
            cloud: Point cloud (normals, if any, are replaced)
            k: Neighborhood size, at least 3
            threads: Worker count for the neighbor search
            show_progress: Whether to print a status line

        Returns:
            Copy of the cloud with normals set
        """
        from config import MIN_NORMAL_NEIGHBORS

        if k < MIN_NORMAL_NEIGHBORS:
            raise InsufficientPointsError(
                f"k={k} is too small for a covariance normal; use k >= {MIN_NORMAL_NEIGHBORS}"
            )
        if len(cloud) < k:
            raise InsufficientPointsError(
                f"Cloud has {len(cloud)} points but k={k} neighbors were requested; lower k"
            )

        points = cloud.points
        nbrs = NearestNeighbors(n_neighbors=k, algorithm="kd_tree", n_jobs=threads).fit(points)
        _, indices = nbrs.kneighbors(points)

        neighborhoods = points[indices]  # (N, k, 3)
        centroids = neighborhoods.mean(axis=1)
        centered = neighborhoods - centroids[:, None, :]
        covariances = np.einsum("nki,nkj->nij", centered, centered) / k

        # eigh sorts eigenvalues ascending, column 0 is the smallest
        _, eigenvectors = np.linalg.eigh(covariances)
        normals = eigenvectors[:, :, 0]

        outward = np.einsum("ni,ni->n", points - centroids, normals)
        normals[outward < 0] *= -1.0
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)

        if show_progress:
            print(f"✓ Estimated normals for {len(cloud)} points (k={k})", file=sys.stderr)

        return cloud.with_normals(normals)


def normalize_to_unit_cube(cloud: PointCloud) -> PointCloud:
    """Convenience wrapper for PointProcessor.normalize_to_unit_cube"""
    return PointProcessor.normalize_to_unit_cube(cloud)


def estimate_normals(cloud: PointCloud, k: int = 10, threads: int = 1) -> PointCloud:
    """Convenience wrapper for PointProcessor.estimate_normals"""
    return PointProcessor.estimate_normals(cloud, k=k, threads=threads)
