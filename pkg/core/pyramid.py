"""
Pyramid Module
Iterative 2x2x2 merging of non-complex cells into a multi-level voxel pyramid
"""

import os
import sys
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from core.voxel_grid import CellIndex, CellLabel, VoxelGrid
from errors import PyramidConsistencyError, UnlabeledCellError
from utils.data_loader import PointCloud, save_point_cloud


@dataclass(frozen=True)
class PyramidNode:
    """A cubic leaf covering (2^level)^3 level-0 cells from anchor"""

    level: int
    anchor: CellIndex  # level-0 index of the lowest corner
    label: CellLabel
    point_count: int = 0

    def __post_init__(self):
        size = 1 << self.level
        if self.level < 0 or any(a % size for a in self.anchor):
            raise PyramidConsistencyError(
                f"node anchor {self.anchor} is not aligned to level {self.level} (multiple of {size})"
            )
        if self.level > 0 and self.label == CellLabel.COMPLEX:
            raise PyramidConsistencyError(f"complex node at level {self.level} (complex cells never merge)")

    @property
    def size(self) -> int:
        return 1 << self.level

    def center(self, base_resolution: int) -> np.ndarray:
        """Geometric center in normalized coordinates"""
        return (np.asarray(self.anchor, dtype=np.float64) + self.size / 2.0) / base_resolution

    def sort_key(self) -> Tuple[int, int, int, int]:
        return (*self.anchor, self.level)


class VoxelPyramid:
    """Non-overlapping leaves of mixed power-of-two sizes tiling the R^3 grid"""

    def __init__(self, leaves: Iterable[PyramidNode], base_resolution: int, rounds_executed: int = 0):
        self.leaves: Tuple[PyramidNode, ...] = tuple(sorted(leaves, key=PyramidNode.sort_key))
        self.base_resolution = base_resolution
        self.rounds_executed = rounds_executed

    def __len__(self) -> int:
        return len(self.leaves)

    def __iter__(self) -> Iterator[PyramidNode]:
        return iter(self.leaves)

    @property
    def point_count(self) -> int:
        return sum(leaf.point_count for leaf in self.leaves)

    def non_empty_leaves(self) -> List[PyramidNode]:
        return [leaf for leaf in self.leaves if leaf.label != CellLabel.EMPTY]

    def check_tiling(self):
        """Raise PyramidConsistencyError unless every level-0 cell is covered exactly once"""
        R = self.base_resolution
        coverage = np.zeros((R, R, R), dtype=np.int32)
        for leaf in self.leaves:
            i, j, k = leaf.anchor
            s = leaf.size
            if max(i, j, k) + s > R:
                raise PyramidConsistencyError(f"leaf at {leaf.anchor} (size {s}) extends past the grid")
            coverage[i:i + s, j:j + s, k:k + s] += 1
        if not np.all(coverage == 1):
            bad = tuple(int(c) for c in np.argwhere(coverage != 1)[0])
            raise PyramidConsistencyError(
                f"cell {bad} is covered {int(coverage[bad])} times; leaves must tile the grid exactly once"
            )

    def save(self, file_path: str):
        """
        Save as text: 'base_resolution R', 'rounds N', then 'level ai aj ak label point_count' per leaf

        Args:
            file_path: Destination path
        """
        parent = os.path.dirname(file_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(f"base_resolution {self.base_resolution}\n")
            f.write(f"rounds {self.rounds_executed}\n")
            for leaf in self.leaves:
                ai, aj, ak = leaf.anchor
                f.write(f"{leaf.level} {ai} {aj} {ak} {leaf.label.value} {leaf.point_count}\n")

    @classmethod
    def load(cls, file_path: str) -> "VoxelPyramid":
        """
        Load a pyramid written by save

        Args:
            file_path: Path to pyramid text file

        Returns:
            VoxelPyramid
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Pyramid file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as f:
            lines = [line.split() for line in f if line.strip()]

        if len(lines) < 2 or lines[0][0] != "base_resolution" or lines[1][0] != "rounds":
            raise ValueError(f"{file_path}: expected headers 'base_resolution R' and 'rounds N'")

        leaves = []
        for line_number, parts in enumerate(lines[2:], start=3):
            if len(parts) != 6:
                raise ValueError(f"{file_path}: line {line_number}: expected 'level ai aj ak label point_count'")
            leaves.append(PyramidNode(
                level=int(parts[0]),
                anchor=(int(parts[1]), int(parts[2]), int(parts[3])),
                label=CellLabel(parts[4]),
                point_count=int(parts[5]),
            ))
        return cls(leaves, base_resolution=int(lines[0][1]), rounds_executed=int(lines[1][1]))


def merge_round(leaves: Iterable[PyramidNode], level: int) -> Tuple[List[PyramidNode], int]:
    """
    Merge every aligned 2x2x2 block of level-`level` siblings that holds no complex leaf

    A merged parent is empty when all 8 children are empty, otherwise
    non_complex; its point_count is the sum of the children's.

    Args:
        leaves: Current leaves (tiling the grid)
        level: Level whose sibling blocks are examined

    Returns:
        (new leaves in lexicographic anchor order, merges performed)
    """
    parent_size = 2 << level
    blocks: Dict[CellIndex, List[PyramidNode]] = defaultdict(list)
    result: List[PyramidNode] = []

    for leaf in leaves:
        if leaf.level != level:
            result.append(leaf)
            continue
        if any(a % leaf.size for a in leaf.anchor):
            raise PyramidConsistencyError(f"misaligned leaf {leaf.anchor} at level {level}")
        parent = tuple(a - a % parent_size for a in leaf.anchor)
        blocks[parent].append(leaf)

    merges = 0
    for parent in sorted(blocks):
        children = blocks[parent]
        if len(children) > 8 or len({c.anchor for c in children}) != len(children):
            raise PyramidConsistencyError(f"overlapping level-{level} leaves in block {parent}")
        if len(children) == 8 and all(c.label != CellLabel.COMPLEX for c in children):
            all_empty = all(c.label == CellLabel.EMPTY for c in children)
            result.append(PyramidNode(
                level=level + 1,
                anchor=parent,
                label=CellLabel.EMPTY if all_empty else CellLabel.NON_COMPLEX,
                point_count=sum(c.point_count for c in children),
            ))
            merges += 1
        else:
            result.extend(children)

    result.sort(key=PyramidNode.sort_key)
    return result, merges


def _level0_leaves(grid: VoxelGrid, default_label: Optional[CellLabel] = None) -> List[PyramidNode]:
    R = grid.resolution
    cells = grid.cells
    leaves = []
    for i in range(R):
        for j in range(R):
            for k in range(R):
                cell = cells.get((i, j, k))
                if cell is None:
                    leaves.append(PyramidNode(0, (i, j, k), CellLabel.EMPTY, 0))
                    continue
                label = cell.label or default_label
                if label is None:
                    raise UnlabeledCellError(
                        f"cell {(i, j, k)} has no complexity label; classify the grid before building a pyramid"
                    )
                leaves.append(PyramidNode(0, (i, j, k), label, cell.point_count))
    return leaves


def build_pyramid(grid: VoxelGrid, max_level: Optional[int] = None, show_progress: bool = False) -> VoxelPyramid:
    """
    Merge level by level until a round merges nothing or the top level is reached

    Args:
        grid: Classified grid
        max_level: Cap on leaf level (defaults to the grid config's merge depth)
        show_progress: Whether to print a status line

    Returns:
        VoxelPyramid
    """
    top = grid.config.merge_depth if max_level is None else max_level
    leaves = _level0_leaves(grid)

    rounds = 0
    for level in range(top):
        leaves, merges = merge_round(leaves, level)
        rounds += 1
        if merges == 0:
            break

    pyramid = VoxelPyramid(leaves, grid.resolution, rounds)
    if pyramid.point_count != grid.point_count:
        raise PyramidConsistencyError(
            f"pyramid covers {pyramid.point_count} points but the grid holds {grid.point_count}"
        )

    if show_progress:
        print(
            f"✓ Built pyramid: {len(pyramid)} leaves from {grid.resolution ** 3} cells "
            f"in {rounds} round(s)",
            file=sys.stderr,
        )
    return pyramid


def fixed_resolution_pyramid(grid: VoxelGrid) -> VoxelPyramid:
    """FRV baseline: every level-0 cell is its own leaf, no merging"""
    return VoxelPyramid(_level0_leaves(grid, default_label=CellLabel.COMPLEX), grid.resolution, 0)


def pyramid_to_points(pyr: VoxelPyramid) -> PointCloud:
    """
    One point per non-empty leaf at the leaf's geometric center

    Args:
        pyr: Voxel pyramid

    Returns:
        PointCloud in normalized coordinates (empty when every leaf is empty)
    """
    leaves = pyr.non_empty_leaves()
    if not leaves:
        return PointCloud(points=np.empty((0, 3)))
    return PointCloud(points=np.array([leaf.center(pyr.base_resolution) for leaf in leaves]))


def pyramid_occupancy(pyr: VoxelPyramid) -> np.ndarray:
    """
    Level-0 occupancy predicted by the pyramid (every cell under a non-empty leaf is occupied)

    Returns:
        (R, R, R) bool array
    """
    R = pyr.base_resolution
    occupancy = np.zeros((R, R, R), dtype=bool)
    for leaf in pyr.non_empty_leaves():
        i, j, k = leaf.anchor
        s = leaf.size
        occupancy[i:i + s, j:j + s, k:k + s] = True
    return occupancy


def level_histogram(pyr: VoxelPyramid) -> Dict[int, int]:
    """Leaf count per level, ascending"""
    return dict(sorted(Counter(leaf.level for leaf in pyr.leaves).items()))


def save_leaf_centers(pyr: VoxelPyramid, file_path: str):
    """Write the non-empty leaf centers as an ascii PLY"""
    save_point_cloud(pyramid_to_points(pyr), file_path, "ply-ascii")
