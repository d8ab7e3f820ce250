"""
Utility modules for point cloud I/O and preparation

Easy imports:
    from utils import PointCloud, load_point_cloud, PointProcessor
"""

from utils.data_loader import (
    PointCloud,
    PointCloudLoader,
    PointCloudWriter,
    load_point_cloud,
    save_point_cloud,
)
from utils.point_processor import PointProcessor, normalize_to_unit_cube, estimate_normals
from utils.fixtures import FixtureGenerator, make_fixture

__all__ = [
    'PointCloud',
    'PointCloudLoader',
    'PointCloudWriter',
    'load_point_cloud',
    'save_point_cloud',
    'PointProcessor',
    'normalize_to_unit_cube',
    'estimate_normals',
    'FixtureGenerator',
    'make_fixture'
]
