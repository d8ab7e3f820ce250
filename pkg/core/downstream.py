"""
Downstream Module
Stand-in for the model that consumes a voxelization: one token per leaf, online SGD

Work here scales with the number of leaves handed over, so a merged pyramid
is cheaper to consume than the dense fixed-resolution grid.
"""

import sys
from typing import Optional

import numpy as np

import config
from core.pyramid import VoxelPyramid
from core.voxel_grid import CellLabel
from errors import TrainingDivergenceError


def leaf_tokens(pyr: VoxelPyramid) -> np.ndarray:
    """
    Feature row per leaf: center (3), edge length / R, complex flag, empty flag

    Args:
        pyr: Pyramid to encode

    Returns:
        (n_leaves, LEAF_TOKEN_WIDTH) array
    """
    R = pyr.base_resolution
    tokens = np.zeros((len(pyr), config.LEAF_TOKEN_WIDTH))
    for row, leaf in enumerate(pyr):
        tokens[row, :3] = leaf.center(R)
        tokens[row, 3] = leaf.size / R
        tokens[row, 4] = leaf.label == CellLabel.COMPLEX
        tokens[row, 5] = leaf.label == CellLabel.EMPTY
    return tokens


def leaf_targets(pyr: VoxelPyramid) -> np.ndarray:
    """log(1 + points per covered level-0 cell) for every leaf"""
    counts = np.array([leaf.point_count for leaf in pyr], dtype=np.float64)
    volumes = np.array([leaf.size ** 3 for leaf in pyr], dtype=np.float64)
    return np.log1p(counts / volumes)


class LeafConsumer:
    """One-hidden-layer ReLU regressor trained one leaf at a time"""

    def __init__(self, epochs: Optional[int] = None, step_size: Optional[float] = None,
                 hidden: Optional[int] = None, seed: Optional[int] = None,
                 show_progress: bool = False):
        """
        Args:
            epochs: Passes over the leaves
            step_size: SGD learning rate
            hidden: Hidden units
            seed: Seed for initialization and visiting order
            show_progress: Whether to print a status line
        """
        self.epochs = config.DOWNSTREAM_EPOCHS if epochs is None else epochs
        self.step_size = config.DOWNSTREAM_STEP_SIZE if step_size is None else step_size
        self.hidden = config.DOWNSTREAM_HIDDEN if hidden is None else hidden
        self.seed = config.DEFAULT_SEED if seed is None else seed
        self.show_progress = show_progress

        if self.epochs < 0:
            raise ValueError(f"downstream epochs must be >= 0, got {self.epochs}")
        if not self.step_size > 0:
            raise ValueError(f"downstream step size must be > 0, got {self.step_size}")
        if self.hidden < 1:
            raise ValueError(f"downstream hidden units must be >= 1, got {self.hidden}")

    def consume(self, pyr: VoxelPyramid) -> float:
        """
        Fit the regressor on the pyramid's leaves

        Args:
            pyr: Pyramid whose leaves become training samples

        Returns:
            Mean squared error over the last epoch (0.0 when epochs is 0 or there are no leaves)
        """
        if self.epochs == 0 or len(pyr) == 0:
            return 0.0
        X = leaf_tokens(pyr)
        y = leaf_targets(pyr)

        rng = np.random.default_rng(self.seed)
        W1 = rng.uniform(-1.0, 1.0, size=(self.hidden, X.shape[1])) / np.sqrt(X.shape[1])
        b1 = np.zeros(self.hidden)
        w2 = rng.uniform(-1.0, 1.0, size=self.hidden) / np.sqrt(self.hidden)
        b2 = 0.0

        loss = 0.0
        for epoch in range(self.epochs):
            squared = 0.0
            for i in rng.permutation(len(X)):
                x = X[i]
                pre = W1 @ x + b1
                h = np.maximum(pre, 0.0)
                err = float(w2 @ h) + b2 - y[i]
                squared += err * err

                grad_h = err * w2 * (pre > 0.0)
                w2 -= self.step_size * err * h
                b2 -= self.step_size * err
                W1 -= self.step_size * np.outer(grad_h, x)
                b1 -= self.step_size * grad_h

            loss = squared / len(X)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch, loss)

        if self.show_progress:
            print(f"✓ Consumed {len(X)} leaves for {self.epochs} epochs (mse {loss:.6f})", file=sys.stderr)
        return loss
