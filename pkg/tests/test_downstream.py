"""
Tests for the leaf consumer timed after each pipeline run
"""

import numpy as np
import pytest

import config
from core.downstream import LeafConsumer, leaf_targets, leaf_tokens
from core.pyramid import PyramidNode, VoxelPyramid
from core.voxel_grid import CellLabel


@pytest.fixture
def small_pyramid():
    """R=4: one merged empty block, one merged non-complex block, six complex cells"""
    leaves = [
        PyramidNode(level=1, anchor=(0, 0, 0), label=CellLabel.EMPTY),
        PyramidNode(level=1, anchor=(2, 0, 0), label=CellLabel.NON_COMPLEX, point_count=16),
    ]
    for k in range(6):
        leaves.append(PyramidNode(level=0, anchor=(k % 2, 2 + (k // 2) % 2, k // 4), label=CellLabel.COMPLEX,
                                  point_count=k + 1))
    return VoxelPyramid(leaves, base_resolution=4)


def test_leaf_tokens(small_pyramid):
    tokens = leaf_tokens(small_pyramid)

    assert tokens.shape == (len(small_pyramid), config.LEAF_TOKEN_WIDTH)
    by_anchor = {leaf.anchor: row for leaf, row in zip(small_pyramid, tokens)}
    np.testing.assert_allclose(by_anchor[(0, 0, 0)], [0.25, 0.25, 0.25, 0.5, 0.0, 1.0])
    np.testing.assert_allclose(by_anchor[(2, 0, 0)], [0.75, 0.25, 0.25, 0.5, 0.0, 0.0])
    np.testing.assert_allclose(by_anchor[(1, 2, 0)], [0.375, 0.625, 0.125, 0.25, 1.0, 0.0])


def test_leaf_targets_are_per_cell_density(small_pyramid):
    targets = dict(zip((leaf.anchor for leaf in small_pyramid), leaf_targets(small_pyramid)))

    assert targets[(0, 0, 0)] == 0.0
    assert targets[(2, 0, 0)] == pytest.approx(np.log1p(2.0))
    assert targets[(0, 2, 0)] == pytest.approx(np.log1p(1.0))


def test_consume_learns(small_pyramid):
    one = LeafConsumer(epochs=1, seed=0).consume(small_pyramid)
    many = LeafConsumer(epochs=200, seed=0).consume(small_pyramid)

    assert np.isfinite(many)
    assert many < one


def test_consume_is_deterministic(small_pyramid):
    assert LeafConsumer(epochs=5, seed=3).consume(small_pyramid) == LeafConsumer(epochs=5, seed=3).consume(small_pyramid)


def test_zero_epochs_skip_the_stage(small_pyramid):
    assert LeafConsumer(epochs=0).consume(small_pyramid) == 0.0
    assert LeafConsumer(epochs=3).consume(VoxelPyramid([], base_resolution=4)) == 0.0


@pytest.mark.parametrize("kwargs, match", [
    ({"epochs": -1}, "epochs"),
    ({"step_size": 0.0}, "step size"),
    ({"hidden": 0}, "hidden"),
])
def test_invalid_settings(kwargs, match):
    with pytest.raises(ValueError, match=match):
        LeafConsumer(**kwargs)
