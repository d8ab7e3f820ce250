"""
Shared pytest fixtures for the toolkit tests
"""

import os
import sys

import numpy as np
import pytest

# Add repository root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.voxel_grid import VoxelCell
from utils.data_loader import PointCloud
from utils.fixtures import FixtureGenerator


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def fixtures_small():
    """Fixture generator with few points, for fast pipeline runs"""
    return FixtureGenerator(n_points=4000, seed=0)


@pytest.fixture(scope="session")
def fixtures_full():
    """Fixture generator at the default point count"""
    return FixtureGenerator(seed=0)


@pytest.fixture
def cell_factory():
    """
    Build a (cell, cloud) pair from raw points

    The cell holds every point of the cloud; resolution sets its volume.
    """
    def make(points, normals=None, index=(0, 0, 0), resolution=1):
        cloud = PointCloud(points=np.asarray(points, dtype=np.float64), normals=normals)
        cell = VoxelCell(
            index=tuple(index),
            point_indices=np.arange(len(cloud)),
            volume=(1.0 / resolution) ** 3,
            point_count=len(cloud),
        )
        return cell, cloud

    return make


@pytest.fixture
def write_text(tmp_path):
    """Write a text file under tmp_path and return its path"""
    def write(name, content):
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        return str(path)

    return write
