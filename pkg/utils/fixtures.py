"""
Fixtures Module
Generates the reproducible synthetic shapes used by gen-fixtures, bench and the tests
"""

import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from utils.data_loader import PointCloud, save_point_cloud


class FixtureGenerator:
    """Seeded generator for plane, sphere, cube-edge, line and mixed clouds"""

    def __init__(self, n_points: Optional[int] = None, seed: Optional[int] = None):
        """
        Initialize FixtureGenerator

        Args:
            n_points: Points per shape
            seed: Seed for numpy's default_rng
        """
        from config import DEFAULT_FIXTURE_POINTS, DEFAULT_SEED

        self.n_points = DEFAULT_FIXTURE_POINTS if n_points is None else n_points
        self.seed = DEFAULT_SEED if seed is None else seed
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")

    def _rng(self, name: str) -> np.random.Generator:
        # One independent stream per shape so shapes do not depend on generation order
        from config import FIXTURE_NAMES

        return np.random.default_rng([self.seed, FIXTURE_NAMES.index(name)])

    @staticmethod
    def _plane_points(rng: np.random.Generator, n: int, height: float, noise: float) -> np.ndarray:
        xy = rng.uniform(0.0, 1.0, size=(n, 2))
        z = height + rng.normal(0.0, noise, size=n)
        return np.column_stack([xy, z])

    @staticmethod
    def _sphere_points(rng: np.random.Generator, n: int, center, radius: float) -> np.ndarray:
        directions = rng.normal(size=(n, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return np.asarray(center) + radius * directions

    @staticmethod
    def _segment_points(rng: np.random.Generator, n: int, start, end) -> np.ndarray:
        t = rng.uniform(0.0, 1.0, size=(n, 1))
        start = np.asarray(start, dtype=np.float64)
        end = np.asarray(end, dtype=np.float64)
        return start + t * (end - start)

    def plane(self) -> PointCloud:
        """Unit square at z = 0.52 with small Gaussian thickness"""
        rng = self._rng("plane")
        return PointCloud(points=self._plane_points(rng, self.n_points, 0.52, 0.002))

    def sphere(self) -> PointCloud:
        """Uniform samples on a sphere of radius 0.5"""
        rng = self._rng("sphere")
        return PointCloud(points=self._sphere_points(rng, self.n_points, (0.5, 0.5, 0.5), 0.5))

    def cube_edges(self) -> PointCloud:
        """Points on the 12 edges of the unit cube"""
        rng = self._rng("cube_edges")
        corners = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
        edges = [
            (a, b) for a in range(8) for b in range(a + 1, 8)
            if np.sum(corners[a] != corners[b]) == 1
        ]
        counts = np.full(len(edges), self.n_points // len(edges))
        counts[: self.n_points % len(edges)] += 1
        parts = [
            self._segment_points(rng, int(count), corners[a], corners[b])
            for (a, b), count in zip(edges, counts)
        ]
        return PointCloud(points=np.vstack(parts))

    def line(self) -> PointCloud:
        """Straight segment along the x axis"""
        rng = self._rng("line")
        return PointCloud(points=self._segment_points(rng, self.n_points, (0.0, 0.3, 0.7), (1.0, 0.3, 0.7)))

    def mixed(self) -> PointCloud:
        """Plane floor, a small sphere and a vertical rod in one scene"""
        rng = self._rng("mixed")
        n_plane = self.n_points // 2
        n_sphere = self.n_points // 3
        n_rod = self.n_points - n_plane - n_sphere
        points = np.vstack([
            self._plane_points(rng, n_plane, 0.0, 0.002),
            self._sphere_points(rng, n_sphere, (0.3, 0.3, 0.45), 0.2),
            self._segment_points(rng, n_rod, (0.7, 0.7, 0.15), (0.7, 0.7, 0.95)),
        ])
        return PointCloud(points=points)

    def generators(self) -> Dict[str, Callable[[], PointCloud]]:
        return {
            "plane": self.plane,
            "sphere": self.sphere,
            "cube_edges": self.cube_edges,
            "line": self.line,
            "mixed": self.mixed,
        }

    def make(self, name: str) -> PointCloud:
        """
        Build one named fixture

        Args:
            name: One of config.FIXTURE_NAMES

        Returns:
            PointCloud in raw (un-normalized) coordinates
        """
        generators = self.generators()
        if name not in generators:
            raise ValueError(f"Unknown fixture '{name}'. Choose from: {', '.join(generators)}")
        return generators[name]()

    def write_all(self, out_dir: str, names: Optional[List[str]] = None,
                  show_progress: bool = False) -> List[str]:
        """
        Write fixtures as ascii PLY files

        Args:
            out_dir: Destination directory (created if missing)
            names: Subset of fixture names (default: all)
            show_progress: Whether to print a status line per file

        Returns:
            Written file paths
        """
        from config import FIXTURE_NAMES

        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for name in names or FIXTURE_NAMES:
            path = os.path.join(out_dir, f"{name}.ply")
            save_point_cloud(self.make(name), path, "ply-ascii")
            paths.append(path)
            if show_progress:
                print(f"✓ Wrote {name} fixture ({self.n_points} points) to {path}", file=sys.stderr)
        return paths


def make_fixture(name: str, n_points: Optional[int] = None, seed: Optional[int] = None) -> PointCloud:
    """Convenience function to build one fixture cloud"""
    return FixtureGenerator(n_points, seed).make(name)
