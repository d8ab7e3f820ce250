"""
Voxel Grid Module
Partitions a normalized point cloud into the fixed-resolution initial grid
Also provides the fixed-resolution (FRV) baseline labelling
"""

import os
import sys
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Tuple

import numpy as np

import config
from errors import NotNormalizedError, PyramidConsistencyError
from utils.data_loader import PointCloud

if TYPE_CHECKING:
    from core.complexity import ComplexityMetrics

CellIndex = Tuple[int, int, int]


class CellLabel(str, Enum):
    """Complexity label of a cell or pyramid leaf"""

    COMPLEX = "complex"
    NON_COMPLEX = "non_complex"
    EMPTY = "empty"


@dataclass(frozen=True)
class GridConfig:
    """Gridding, thresholding and merging parameters"""

    resolution: int = config.DEFAULT_RESOLUTION
    percentile: float = config.DEFAULT_PERCENTILE
    fixed_thresholds: Optional[Dict[str, float]] = None
    max_merge_level: Optional[int] = None  # None = merge up to a single root
    classification_rule: str = config.DEFAULT_CLASSIFICATION_RULE
    threads: int = config.DEFAULT_THREADS

    def __post_init__(self):
        r = self.resolution
        if not isinstance(r, (int, np.integer)) or r < config.MIN_RESOLUTION or r & (r - 1):
            raise ValueError(
                f"resolution must be a power of two >= {config.MIN_RESOLUTION}, got {r}"
            )
        if not 0.0 < float(self.percentile) < 100.0:
            raise ValueError(f"percentile must lie strictly between 0 and 100, got {self.percentile}")
        if self.fixed_thresholds:
            unknown = sorted(set(self.fixed_thresholds) - set(config.METRIC_NAMES))
            if unknown:
                raise ValueError(
                    f"Unknown metric(s) in fixed_thresholds: {', '.join(unknown)}. "
                    f"Valid names: {', '.join(config.METRIC_NAMES)}"
                )
        if self.max_merge_level is not None and not 0 <= self.max_merge_level <= self.max_level:
            raise ValueError(
                f"max_merge_level must lie in [0, {self.max_level}] for resolution {r}, "
                f"got {self.max_merge_level}"
            )
        if self.classification_rule not in config.CLASSIFICATION_RULES:
            raise ValueError(
                f"classification_rule must be one of {', '.join(config.CLASSIFICATION_RULES)}, "
                f"got '{self.classification_rule}'"
            )
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    @property
    def max_level(self) -> int:
        """log2(resolution), the level of a single root leaf"""
        return int(self.resolution).bit_length() - 1

    @property
    def merge_depth(self) -> int:
        return self.max_level if self.max_merge_level is None else self.max_merge_level

    @property
    def cell_volume(self) -> float:
        return (1.0 / self.resolution) ** 3


@dataclass(frozen=True)
class VoxelCell:
    """One cell of the level-0 grid"""

    index: CellIndex
    point_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64), repr=False)
    volume: float = 1.0
    point_count: int = 0
    metrics: Optional["ComplexityMetrics"] = None
    label: Optional[CellLabel] = None  # None until classified; empty cells are always EMPTY

    @property
    def is_empty(self) -> bool:
        return self.point_count == 0


class VoxelGrid:
    """Sparse, immutable map from index triple to occupied VoxelCell"""

    def __init__(self, config: GridConfig, cells: Dict[CellIndex, VoxelCell], cloud_ref: str = ""):
        """
        Args:
            config: Grid configuration
            cells: Occupied cells keyed by (i, j, k)
            cloud_ref: Identifier of the source cloud (usually its path)
        """
        self.config = config
        self._cells = dict(sorted(cells.items()))
        self.cloud_ref = cloud_ref

    @property
    def resolution(self) -> int:
        return self.config.resolution

    @property
    def cells(self) -> Dict[CellIndex, VoxelCell]:
        return dict(self._cells)

    def __len__(self) -> int:
        return len(self._cells)

    def __iter__(self) -> Iterator[VoxelCell]:
        return iter(self._cells.values())

    def __contains__(self, index) -> bool:
        return tuple(index) in self._cells

    @property
    def point_count(self) -> int:
        return sum(cell.point_count for cell in self._cells.values())

    def cell(self, index: CellIndex) -> VoxelCell:
        """Stored cell, or a materialized empty cell for an absent index"""
        index = tuple(int(c) for c in index)
        if index in self._cells:
            return self._cells[index]
        return VoxelCell(index=index, volume=self.config.cell_volume, label=CellLabel.EMPTY)

    def occupied_indices(self) -> List[CellIndex]:
        return list(self._cells)

    def is_classified(self) -> bool:
        return all(cell.label is not None for cell in self._cells.values())

    def with_cells(self, cells: Dict[CellIndex, VoxelCell]) -> "VoxelGrid":
        """New grid sharing config and cloud_ref"""
        return VoxelGrid(self.config, cells, self.cloud_ref)

    def save(self, file_path: str):
        """
        Save grid as text: header 'resolution R', then 'i j k n_points label' per occupied cell

        Args:
            file_path: Destination path
        """
        parent = os.path.dirname(file_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(f"resolution {self.resolution}\n")
            for (i, j, k), cell in self._cells.items():
                label = cell.label.value if cell.label is not None else "unlabeled"
                f.write(f"{i} {j} {k} {cell.point_count} {label}\n")

    @classmethod
    def load(cls, file_path: str, grid_config: Optional[GridConfig] = None) -> "VoxelGrid":
        """
        Load a grid written by save (point indices are not stored, only counts)

        Args:
            file_path: Path to a grid text file
            grid_config: Config to attach; resolution is taken from the file

        Returns:
            VoxelGrid
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Grid file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as f:
            lines = [line.split() for line in f if line.strip()]

        if not lines or lines[0][0] != "resolution" or len(lines[0]) != 2:
            raise ValueError(f"{file_path}: expected header 'resolution R'")
        resolution = int(lines[0][1])
        grid_config = replace(grid_config or GridConfig(), resolution=resolution)

        cells = {}
        for line_number, parts in enumerate(lines[1:], start=2):
            if len(parts) != 5:
                raise ValueError(f"{file_path}: line {line_number}: expected 'i j k n_points label'")
            index = (int(parts[0]), int(parts[1]), int(parts[2]))
            label = None if parts[4] == "unlabeled" else CellLabel(parts[4])
            cells[index] = VoxelCell(
                index=index,
                volume=grid_config.cell_volume,
                point_count=int(parts[3]),
                label=label,
            )
        return cls(grid_config, cells, cloud_ref=file_path)


def cell_indices(points: np.ndarray, resolution: int) -> np.ndarray:
    """floor(p * R) per axis, with coordinate 1.0 clamped to R - 1"""
    idx = np.floor(points * resolution).astype(np.int64)
    return np.minimum(idx, resolution - 1)


def voxelize(cloud: PointCloud, grid_config: GridConfig, cloud_ref: str = "",
             show_progress: bool = False) -> VoxelGrid:
    """
    Bin every point of a normalized cloud into its level-0 cell

    Args:
        cloud: Cloud normalized to [0, 1]^3
        grid_config: Grid configuration
        cloud_ref: Identifier stored on the grid
        show_progress: Whether to print a status line

    Returns:
        Unlabelled VoxelGrid holding only occupied cells
    """
    points = cloud.points
    outside = ~np.all(np.isfinite(points) & (points >= 0.0) & (points <= 1.0), axis=1)
    if outside.any():
        first = int(np.argmax(outside))
        raise NotNormalizedError(first, points[first])

    R = grid_config.resolution
    idx = cell_indices(points, R)
    linear = (idx[:, 0] * R + idx[:, 1]) * R + idx[:, 2]

    # Stable sort keeps point indices ascending inside each cell
    order = np.argsort(linear, kind="stable")
    keys, starts, counts = np.unique(linear[order], return_index=True, return_counts=True)

    volume = grid_config.cell_volume
    cells = {}
    for key, start, count in zip(keys, starts, counts):
        i, rem = divmod(int(key), R * R)
        j, k = divmod(rem, R)
        cells[(i, j, k)] = VoxelCell(
            index=(i, j, k),
            point_indices=order[start:start + count],
            volume=volume,
            point_count=int(count),
        )

    if show_progress:
        print(f"✓ Voxelized {len(points)} points into {len(cells)} occupied cells (R={R})", file=sys.stderr)

    return VoxelGrid(grid_config, cells, cloud_ref)


def occupancy_grid(grid: VoxelGrid) -> np.ndarray:
    """
    Dense boolean occupancy

    Args:
        grid: Voxel grid

    Returns:
        (R, R, R) bool array, True where a cell holds points
    """
    R = grid.resolution
    occupancy = np.zeros((R, R, R), dtype=bool)
    indices = [index for index, cell in grid.cells.items() if cell.point_count > 0]
    if indices:
        occupancy[tuple(np.array(indices).T)] = True
    return occupancy


def label_occupancy(grid: VoxelGrid) -> VoxelGrid:
    """FRV baseline labelling: every occupied cell is kept at full resolution (complex)"""
    return grid.with_cells({
        index: replace(cell, label=CellLabel.COMPLEX)
        for index, cell in grid.cells.items()
    })


def check_partition(grid: VoxelGrid, n_points: int):
    """Raise if the cells do not partition exactly n_points points"""
    if grid.point_count != n_points:
        raise PyramidConsistencyError(
            f"grid covers {grid.point_count} points but the cloud has {n_points}"
        )
