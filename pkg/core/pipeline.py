"""
Pipeline Module
Main interface wiring load -> normalize -> normals -> voxelize -> metrics -> thresholds -> classify -> merge
"""

import sys
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import config
from core.complexity import ComplexityAnalyzer, ThresholdSet, classify_voxels, compute_thresholds, save_metrics_csv
from core.pyramid import VoxelPyramid, build_pyramid, fixed_resolution_pyramid, save_leaf_centers
from core.voxel_grid import GridConfig, VoxelGrid, check_partition, label_occupancy, voxelize
from utils.data_loader import PointCloud, load_point_cloud
from utils.point_processor import PointProcessor

CloudSource = Union[str, PointCloud]


@dataclass
class PipelineResult:
    """Everything one pipeline run produced"""

    cloud: PointCloud  # normalized
    grid: VoxelGrid  # labelled
    pyramid: VoxelPyramid
    thresholds: Optional[ThresholdSet] = None  # None for the fixed-resolution baseline
    timings: Dict[str, float] = field(default_factory=dict)  # data_prep, fit (seconds)
    mode: str = "dr-msv"


class VoxelPipeline:
    """Adaptive (DR-MSV) or fixed-resolution (FRV) voxelization of one cloud at a time"""

    def __init__(self, grid_config: Optional[GridConfig] = None, mode: str = "dr-msv",
                 k: Optional[int] = None, show_progress: bool = False):
        """
        Initialize VoxelPipeline

        Args:
            grid_config: Grid parameters (defaults from config)
            mode: "dr-msv" (complexity-driven merging) or "frv" (fixed resolution)
            k: Neighbors for normal estimation when a cloud has no normals
            show_progress: Whether to print status lines
        """
        if mode not in config.PIPELINE_MODES:
            raise ValueError(f"Unknown pipeline mode '{mode}'. Choose from: {', '.join(config.PIPELINE_MODES)}")

        self.grid_config = grid_config or GridConfig()
        self.mode = mode
        self.k = config.DEFAULT_NORMAL_NEIGHBORS if k is None else k
        self.show_progress = show_progress
        self.analyzer = ComplexityAnalyzer(threads=self.grid_config.threads, show_progress=show_progress)

    def prepare(self, source: CloudSource) -> Tuple[PointCloud, VoxelGrid]:
        """
        Load (if a path), normalize, estimate missing normals and voxelize

        Normals are only needed by the complexity metrics, so the
        fixed-resolution mode skips estimating them.

        Args:
            source: File path or in-memory cloud

        Returns:
            (normalized cloud, unlabelled grid)
        """
        if isinstance(source, str):
            cloud = load_point_cloud(source, show_progress=self.show_progress)
            cloud_ref = source
        else:
            cloud = source
            cloud_ref = "<memory>"

        cloud = PointProcessor.normalize_to_unit_cube(cloud)
        if cloud.degenerate and self.show_progress:
            print("⚠️  All points are identical; cloud centered at (0.5, 0.5, 0.5)", file=sys.stderr)

        if self.mode == "dr-msv" and not cloud.has_normals:
            cloud = PointProcessor.estimate_normals(
                cloud, k=self.k, threads=self.grid_config.threads, show_progress=self.show_progress
            )

        grid = voxelize(cloud, self.grid_config, cloud_ref=cloud_ref, show_progress=self.show_progress)
        check_partition(grid, len(cloud))
        return cloud, grid

    def fit(self, cloud: PointCloud, grid: VoxelGrid) -> Tuple[VoxelGrid, Optional[ThresholdSet], VoxelPyramid]:
        """
        Label the grid and build the pyramid

        Args:
            cloud: Normalized cloud the grid was built from
            grid: Unlabelled grid

        Returns:
            (labelled grid, thresholds or None, pyramid)
        """
        if self.mode == "frv":
            labelled = label_occupancy(grid)
            return labelled, None, fixed_resolution_pyramid(labelled)

        with_metrics = self.analyzer.compute_all(grid, cloud)
        thresholds = compute_thresholds(with_metrics, self.grid_config)
        labelled = classify_voxels(with_metrics, thresholds)
        pyramid = build_pyramid(labelled, show_progress=self.show_progress)
        return labelled, thresholds, pyramid

    def run(self, source: CloudSource) -> PipelineResult:
        """
        Full pipeline on one cloud with data_prep / fit wall-clock split

        Args:
            source: File path or in-memory cloud

        Returns:
            PipelineResult
        """
        start = time.perf_counter()
        cloud, grid = self.prepare(source)
        prepared = time.perf_counter()
        labelled, thresholds, pyramid = self.fit(cloud, grid)
        finished = time.perf_counter()

        return PipelineResult(
            cloud=cloud,
            grid=labelled,
            pyramid=pyramid,
            thresholds=thresholds,
            timings={"data_prep": prepared - start, "fit": finished - prepared},
            mode=self.mode,
        )

    @staticmethod
    def write_outputs(result: PipelineResult, pyramid_path: str,
                      metrics_path: Optional[str] = None,
                      centers_path: Optional[str] = None,
                      grid_path: Optional[str] = None,
                      show_progress: bool = False):
        """
        Persist the pyramid and optional side products

        Args:
            result: Pipeline output
            pyramid_path: Pyramid text file
            metrics_path: Per-cell metrics CSV (adaptive mode only)
            centers_path: Leaf-center PLY
            grid_path: Level-0 grid text file
        """
        result.pyramid.save(pyramid_path)
        written = [pyramid_path]
        if metrics_path and result.thresholds is not None:
            save_metrics_csv(result.grid, metrics_path)
            written.append(metrics_path)
        if centers_path:
            save_leaf_centers(result.pyramid, centers_path)
            written.append(centers_path)
        if grid_path:
            result.grid.save(grid_path)
            written.append(grid_path)
        if show_progress:
            print(f"✓ Wrote {', '.join(written)}", file=sys.stderr)


def run_pipeline(source: CloudSource, grid_config: Optional[GridConfig] = None,
                 mode: str = "dr-msv") -> PipelineResult:
    """
    Convenience function to run the pipeline once

    Args:
        source: File path or in-memory cloud
        grid_config: Grid parameters
        mode: "dr-msv" or "frv"

    Returns:
        PipelineResult
    """
    return VoxelPipeline(grid_config, mode).run(source)
