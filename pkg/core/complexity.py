"""
Complexity Module
Per-voxel geometric complexity metrics, percentile thresholds and complex/non-complex labelling
"""

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

import config
from core.voxel_grid import CellLabel, GridConfig, VoxelCell, VoxelGrid
from errors import EmptyCellError, MissingNormalsError, ThresholdError
from utils.data_loader import PointCloud


@dataclass(frozen=True)
class ComplexityMetrics:
    """The seven complexity scores of one occupied cell (higher = more complex)"""

    d: float
    sigma_s: float
    normal_variation: float
    lambda_linear: float
    lambda_planar: float
    H_s: float
    kappa: float
    degenerate: bool = False  # fewer than 3 points or all points identical
    roughness_degenerate: bool = False  # no unique fitting plane (includes collinear cells)

    def value(self, name: str) -> float:
        return getattr(self, name)

    def as_dict(self) -> Dict[str, float]:
        """Metric values only, in config.METRIC_NAMES order"""
        values = asdict(self)
        return {name: values[name] for name in config.METRIC_NAMES}


@dataclass(frozen=True)
class ThresholdSet:
    """
    Per-metric thresholds tau_m

    Metrics named in fixed_metrics took a caller-supplied value (possibly
    +-inf). Every other value is a finite percentile over population_size >= 1
    cells. population_size is 0 only when every metric is fixed.
    """

    values: Dict[str, float]
    percentile: float
    population_size: int  # cells the percentiles were taken over
    fixed_metrics: Tuple[str, ...] = ()

    def __post_init__(self):
        computed = [name for name in self.values if name not in self.fixed_metrics]
        if computed and self.population_size < 1:
            raise ThresholdError(
                f"thresholds for {', '.join(computed)} need a population of at least one cell"
            )
        if not computed and self.population_size != 0:
            raise ThresholdError("override-only thresholds have no population")
        not_finite = [name for name in computed if not np.isfinite(self.values[name])]
        if not_finite:
            raise ThresholdError(f"computed thresholds are not finite: {', '.join(not_finite)}")

    @property
    def override_only(self) -> bool:
        """True when no percentile was taken (every metric fixed)"""
        return all(name in self.fixed_metrics for name in self.values)

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def _cell_points(cell: VoxelCell, cloud: PointCloud) -> np.ndarray:
    if cell.point_count == 0:
        raise EmptyCellError(f"cell {cell.index} is empty; skip empty cells")
    return cloud.points[cell.point_indices]


def _covariance(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(eigenvalues descending, eigenvectors in matching column order) of the 1/n covariance"""
    centered = points - points.mean(axis=0)
    covariance = centered.T @ centered / len(points)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    eigenvalues = np.maximum(eigenvalues, 0.0)  # absorb -1e-17 rounding noise
    return eigenvalues[::-1], eigenvectors[:, ::-1]


def _resolution_of(cell: VoxelCell) -> int:
    return int(round(cell.volume ** (-1.0 / 3.0)))


def point_density(cell: VoxelCell) -> float:
    """
    Points per unit volume, n / V_voxel

    Args:
        cell: Occupied cell

    Returns:
        Density d
    """
    if cell.point_count == 0:
        raise EmptyCellError(f"cell {cell.index} is empty; skip empty cells")
    return cell.point_count / cell.volume


def surface_roughness(cell: VoxelCell, cloud: PointCloud) -> Tuple[float, bool]:
    """
    RMS distance of the cell's points to their total-least-squares plane

    The plane passes through the centroid with the smallest-eigenvalue
    eigenvector as normal. Cells with fewer than 3 points or a rank-deficient
    covariance (collinear or coincident points) have no unique plane.

    Args:
        cell: Occupied cell
        cloud: Cloud the cell indexes into

    Returns:
        (sigma_s, degenerate); sigma_s is 0 when degenerate
    """
    points = _cell_points(cell, cloud)
    if len(points) < config.MIN_POINTS_FOR_PCA:
        return 0.0, True

    eigenvalues, eigenvectors = _covariance(points)
    if eigenvalues[1] <= config.RANK_TOLERANCE * eigenvalues[0]:
        return 0.0, True

    plane_normal = eigenvectors[:, 2]
    distances = (points - points.mean(axis=0)) @ plane_normal
    return float(np.sqrt(np.mean(distances ** 2))), False


def normal_variation(cell: VoxelCell, cloud: PointCloud) -> float:
    """
    1 - cos(theta), where cos(theta) is the mean alignment of the normals with their mean direction

    Returns 1 when the normals cancel out (mean vector of length ~0).
    """
    _cell_points(cell, cloud)
    if cloud.normals is None:
        raise MissingNormalsError(
            "normal_variation needs per-point normals; run estimate_normals on the cloud first"
        )
    normals = cloud.normals[cell.point_indices]
    mean = normals.mean(axis=0)
    length = np.linalg.norm(mean)
    if length <= config.RANK_TOLERANCE:
        return 1.0
    coherence = float(np.mean(normals @ (mean / length)))
    return float(np.clip(1.0 - coherence, 0.0, 2.0))


def pca_features(cell: VoxelCell, cloud: PointCloud) -> Tuple[float, float, float, bool]:
    """
    Eigen-features of the cell covariance (l1 >= l2 >= l3 >= 0)

    Args:
        cell: Occupied cell
        cloud: Cloud the cell indexes into

    Returns:
        (linearity, planarity, curvature, degenerate)
    """
    points = _cell_points(cell, cloud)
    if len(points) < config.MIN_POINTS_FOR_PCA:
        return 0.0, 0.0, 0.0, True

    (l1, l2, l3), _ = _covariance(points)
    if l1 == 0.0:
        return 0.0, 0.0, 0.0, True

    linearity = (l1 - l2) / l1
    planarity = (l2 - l3) / l1
    curvature = l3 / (l1 + l2 + l3)
    return float(linearity), float(planarity), float(curvature), False


def spatial_entropy(cell: VoxelCell, cloud: PointCloud, resolution: Optional[int] = None) -> float:
    """
    Shannon entropy (nats) of the point split over the cell's 8 sub-octants

    Args:
        cell: Occupied cell
        cloud: Cloud the cell indexes into
        resolution: Grid resolution (derived from the cell volume when omitted)

    Returns:
        H_s in [0, ln 8]
    """
    points = _cell_points(cell, cloud)
    R = resolution or _resolution_of(cell)

    local = points * R - np.asarray(cell.index, dtype=np.float64)
    bits = (local >= 0.5).astype(np.int64)
    octants = bits[:, 0] * 4 + bits[:, 1] * 2 + bits[:, 2]
    counts = np.bincount(octants, minlength=8)
    p = counts[counts > 0] / len(points)
    return float(max(0.0, -np.sum(p * np.log(p))))


def compute_cell_metrics(cell: VoxelCell, cloud: PointCloud, resolution: Optional[int] = None) -> ComplexityMetrics:
    """
    All seven metrics of one occupied cell

    Args:
        cell: Occupied cell
        cloud: Cloud with normals
        resolution: Grid resolution

    Returns:
        ComplexityMetrics
    """
    sigma_s, roughness_degenerate = surface_roughness(cell, cloud)
    linearity, planarity, curvature, degenerate = pca_features(cell, cloud)
    return ComplexityMetrics(
        d=point_density(cell),
        sigma_s=sigma_s,
        normal_variation=normal_variation(cell, cloud),
        lambda_linear=linearity,
        lambda_planar=planarity,
        H_s=spatial_entropy(cell, cloud, resolution),
        kappa=curvature,
        degenerate=degenerate,
        roughness_degenerate=roughness_degenerate,
    )


def compute_thresholds(grid: VoxelGrid, grid_config: Optional[GridConfig] = None) -> ThresholdSet:
    """
    Percentile threshold per metric over non-empty, non-degenerate cells

    Percentiles interpolate linearly between order statistics. Entries of
    fixed_thresholds replace the computed value for their metric.

    Args:
        grid: Grid whose occupied cells carry metrics
        grid_config: Percentile and overrides (defaults to the grid's config)

    Returns:
        ThresholdSet
    """
    grid_config = grid_config or grid.config
    overrides = dict(grid_config.fixed_thresholds or {})

    missing = [cell.index for cell in grid if cell.metrics is None]
    if missing:
        raise ThresholdError(
            f"{len(missing)} occupied cell(s) have no metrics (first: {missing[0]}); compute metrics first"
        )

    eligible = [cell.metrics for cell in grid if not cell.metrics.degenerate]
    computed = [name for name in config.METRIC_NAMES if name not in overrides]
    if not eligible and computed:
        raise ThresholdError(
            "No eligible cells to derive thresholds from (every occupied cell is empty or degenerate); "
            "add points, lower the resolution or pass fixed thresholds"
        )

    values = {}
    for name in config.METRIC_NAMES:
        if name in overrides:
            values[name] = float(overrides[name])
        else:
            population = np.array([m.value(name) for m in eligible])
            values[name] = float(np.percentile(population, grid_config.percentile, method="linear"))

    population_size = len(eligible) if computed else 0
    return ThresholdSet(values=values, percentile=float(grid_config.percentile), population_size=population_size,
                        fixed_metrics=tuple(name for name in config.METRIC_NAMES if name in overrides))


def is_complex(metrics: ComplexityMetrics, thresholds: ThresholdSet, rule: str = "any") -> bool:
    """
    Complexity decision for one occupied cell

    Degenerate cells are complex only when their density reaches tau_d.
    """
    if metrics.degenerate:
        return metrics.d >= thresholds["d"]
    hits = [metrics.value(name) >= thresholds[name] for name in config.METRIC_NAMES]
    return all(hits) if rule == "all" else any(hits)


def classify_voxels(grid: VoxelGrid, thresholds: ThresholdSet, rule: Optional[str] = None) -> VoxelGrid:
    """
    Label every occupied cell complex or non_complex

    Args:
        grid: Grid whose occupied cells carry metrics
        thresholds: Per-metric thresholds
        rule: "any" or "all" (defaults to the grid config)

    Returns:
        New labelled grid; absent cells read back as empty
    """
    rule = rule or grid.config.classification_rule
    if rule not in config.CLASSIFICATION_RULES:
        raise ValueError(f"Unknown classification rule '{rule}'")

    labelled = {}
    for index, cell in grid.cells.items():
        if cell.metrics is None:
            raise ThresholdError(f"cell {index} has no metrics; compute metrics before classifying")
        label = CellLabel.COMPLEX if is_complex(cell.metrics, thresholds, rule) else CellLabel.NON_COMPLEX
        labelled[index] = replace(cell, label=label)
    return grid.with_cells(labelled)


class ComplexityAnalyzer:
    """Compute metrics for every occupied cell of a grid"""

    def __init__(self, threads: Optional[int] = None, show_progress: bool = False):
        """
        Args:
            threads: Worker threads (defaults to config.DEFAULT_THREADS)
            show_progress: Whether to print status lines
        """
        self.threads = config.DEFAULT_THREADS if threads is None else threads
        self.show_progress = show_progress

    def compute_all(self, grid: VoxelGrid, cloud: PointCloud) -> VoxelGrid:
        """
        Attach ComplexityMetrics to every occupied cell

        Args:
            grid: Grid built from cloud
            cloud: Normalized cloud with normals

        Returns:
            New grid with metrics set
        """
        if cloud.normals is None:
            raise MissingNormalsError(
                "normal_variation needs per-point normals; run estimate_normals on the cloud first"
            )

        cells = list(grid.cells.values())
        R = grid.resolution

        def work(cell: VoxelCell) -> ComplexityMetrics:
            return compute_cell_metrics(cell, cloud, R)

        if self.threads > 1:
            # map keeps input order, so the result does not depend on scheduling
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                metrics = list(pool.map(work, cells))
        else:
            metrics = [work(cell) for cell in cells]

        if self.show_progress:
            n_degenerate = sum(m.degenerate for m in metrics)
            print(f"✓ Computed metrics for {len(cells)} cells ({n_degenerate} degenerate)", file=sys.stderr)
            if cells and n_degenerate == len(cells):
                print("⚠️  Every occupied cell is degenerate; lower the resolution or add points", file=sys.stderr)

        return grid.with_cells({cell.index: replace(cell, metrics=m) for cell, m in zip(cells, metrics)})


def metrics_table(grid: VoxelGrid) -> pd.DataFrame:
    """
    One row per occupied cell with metrics, columns config.METRICS_CSV_COLUMNS

    Args:
        grid: Grid with metrics

    Returns:
        DataFrame in lexicographic cell order
    """
    rows = []
    for cell in grid:
        if cell.metrics is None:
            continue
        i, j, k = cell.index
        row = {"i": i, "j": j, "k": k, "n": cell.point_count}
        row.update(cell.metrics.as_dict())
        row["label"] = cell.label.value if cell.label is not None else ""
        rows.append(row)
    return pd.DataFrame(rows, columns=config.METRICS_CSV_COLUMNS)


def save_metrics_csv(grid: VoxelGrid, file_path: str):
    """
    Write the per-cell metrics dump

    Args:
        grid: Grid with metrics
        file_path: Destination CSV path
    """
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    metrics_table(grid).to_csv(file_path, index=False, float_format="%.17g", lineterminator="\n")
