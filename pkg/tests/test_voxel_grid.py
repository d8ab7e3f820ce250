"""
Tests for grid configuration, voxelization and occupancy
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from core.voxel_grid import (
    CellLabel,
    GridConfig,
    VoxelGrid,
    cell_indices,
    check_partition,
    label_occupancy,
    occupancy_grid,
    voxelize,
)
from errors import NotNormalizedError, PyramidConsistencyError
from utils.data_loader import PointCloud

unit_clouds = arrays(
    np.float64,
    st.tuples(st.integers(1, 200), st.just(3)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def test_defaults():
    grid_config = GridConfig()
    assert grid_config.resolution == 16
    assert grid_config.percentile == 75.0
    assert grid_config.max_level == 4
    assert grid_config.merge_depth == 4
    assert grid_config.cell_volume == 1.0 / 4096


@pytest.mark.parametrize("resolution", [0, 1, 3, 12, 24])
def test_resolution_must_be_power_of_two(resolution):
    with pytest.raises(ValueError, match="power of two"):
        GridConfig(resolution=resolution)


@pytest.mark.parametrize("kwargs", [
    {"percentile": 0.0},
    {"percentile": 100.0},
    {"fixed_thresholds": {"volume": 1.0}},
    {"max_merge_level": 5},
    {"classification_rule": "most"},
    {"threads": 0},
])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        GridConfig(**kwargs)


def test_single_point_cell():
    grid = voxelize(PointCloud(points=[[0.1, 0.1, 0.1]]), GridConfig(resolution=16))

    assert grid.occupied_indices() == [(1, 1, 1)]
    cell = grid.cell((1, 1, 1))
    assert cell.point_count == 1
    assert cell.volume == 1.0 / 4096


def test_upper_boundary_is_clamped():
    grid = voxelize(PointCloud(points=[[1.0, 1.0, 1.0]]), GridConfig(resolution=16))
    assert grid.occupied_indices() == [(15, 15, 15)]


def test_absent_cell_reads_as_empty():
    grid = voxelize(PointCloud(points=[[0.1, 0.1, 0.1]]), GridConfig(resolution=4))
    cell = grid.cell((3, 3, 3))

    assert cell.is_empty
    assert cell.label == CellLabel.EMPTY
    assert (3, 3, 3) not in grid


def test_outside_point_is_named():
    cloud = PointCloud(points=[[0.5, 0.5, 0.5], [0.2, 1.5, 0.0], [-1.0, 0.0, 0.0]])

    with pytest.raises(NotNormalizedError) as excinfo:
        voxelize(cloud, GridConfig())
    assert excinfo.value.point_index == 1


def test_uniform_points_match_histogram(rng):
    points = rng.uniform(size=(10000, 3))
    grid = voxelize(PointCloud(points=points), GridConfig(resolution=16))

    histogram, _ = np.histogramdd(np.floor(points * 16), bins=16, range=[(0, 16)] * 3)
    assert len(grid) == int(np.count_nonzero(histogram))
    for index, cell in grid.cells.items():
        assert cell.point_count == histogram[index]

    occupancy = occupancy_grid(grid)
    assert occupancy.sum() == len(grid)
    assert np.array_equal(occupancy, histogram > 0)


def test_empty_grid_occupancy():
    grid = VoxelGrid(GridConfig(resolution=4), {})
    occupancy = occupancy_grid(grid)

    assert occupancy.shape == (4, 4, 4)
    assert not occupancy.any()


def test_single_occupied_cell():
    grid = voxelize(PointCloud(points=[[0.9, 0.1, 0.6]]), GridConfig(resolution=8))
    occupancy = occupancy_grid(grid)

    assert occupancy.sum() == 1
    assert occupancy[7, 0, 4]


@settings(max_examples=50, deadline=None)
@given(points=unit_clouds, resolution=st.sampled_from([2, 4, 8, 16]))
def test_partition_property(points, resolution):
    """Every point lands in exactly one cell, the one floor(p * R) names"""
    grid = voxelize(PointCloud(points=points), GridConfig(resolution=resolution))

    seen = np.concatenate([cell.point_indices for cell in grid])
    assert np.array_equal(np.sort(seen), np.arange(len(points)))
    expected = cell_indices(points, resolution)
    for index, cell in grid.cells.items():
        assert np.all(expected[cell.point_indices] == index)
    check_partition(grid, len(points))


@settings(max_examples=50, deadline=None)
@given(points=unit_clouds)
def test_doubling_resolution_refines(points):
    """Points sharing a cell at R=32 share a cell at R=16"""
    fine = cell_indices(points, 32)
    coarse = cell_indices(points, 16)
    assert np.array_equal(fine // 2, coarse)


def test_voxelize_is_deterministic(rng):
    cloud = PointCloud(points=rng.uniform(size=(500, 3)))
    a = voxelize(cloud, GridConfig(resolution=8))
    b = voxelize(cloud, GridConfig(resolution=8))

    assert a.occupied_indices() == b.occupied_indices()
    for cell_a, cell_b in zip(a, b):
        assert np.array_equal(cell_a.point_indices, cell_b.point_indices)


def test_check_partition_detects_loss(rng):
    grid = voxelize(PointCloud(points=rng.uniform(size=(20, 3))), GridConfig(resolution=4))
    with pytest.raises(PyramidConsistencyError):
        check_partition(grid, 21)


def test_label_occupancy_marks_every_cell_complex(rng):
    grid = voxelize(PointCloud(points=rng.uniform(size=(50, 3))), GridConfig(resolution=4))
    labelled = label_occupancy(grid)

    assert labelled.is_classified()
    assert all(cell.label == CellLabel.COMPLEX for cell in labelled)
    assert not grid.is_classified()


def test_grid_save_and_load(tmp_path, rng):
    grid = label_occupancy(voxelize(PointCloud(points=rng.uniform(size=(30, 3))), GridConfig(resolution=4)))
    path = str(tmp_path / "grid.txt")
    grid.save(path)

    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == "resolution 4"
    assert len(lines) == len(grid) + 1
    i, j, k = grid.occupied_indices()[0]
    assert lines[1] == f"{i} {j} {k} {grid.cell((i, j, k)).point_count} complex"

    loaded = VoxelGrid.load(path)
    assert loaded.resolution == 4
    assert loaded.occupied_indices() == grid.occupied_indices()
    assert loaded.point_count == 30


def test_unlabelled_cells_save_as_unlabeled(tmp_path):
    grid = voxelize(PointCloud(points=[[0.0, 0.0, 0.0]]), GridConfig(resolution=2))
    path = str(tmp_path / "grid.txt")
    grid.save(path)

    with open(path, encoding="utf-8") as f:
        assert f.read().splitlines()[1] == "0 0 0 1 unlabeled"
    assert VoxelGrid.load(path).cell((0, 0, 0)).label is None
