"""
Core modules for adaptive voxelization, evaluation and token pooling

Easy imports:
    from core import VoxelPipeline, GridConfig
    from core import timed_pipeline, chamfer_distance
    from core.tap_lme import forward, backward
"""

from core.voxel_grid import CellLabel, GridConfig, VoxelCell, VoxelGrid, voxelize, occupancy_grid
from core.complexity import ComplexityAnalyzer, ComplexityMetrics, ThresholdSet, compute_thresholds, classify_voxels
from core.pyramid import PyramidNode, VoxelPyramid, build_pyramid, merge_round, pyramid_to_points
from core.pipeline import PipelineResult, VoxelPipeline
from core.evaluation import EvalReport, chamfer_distance, evaluate_reconstruction, timed_pipeline
from core.report_formatter import ReportFormatter

__all__ = [
    'CellLabel',
    'GridConfig',
    'VoxelCell',
    'VoxelGrid',
    'voxelize',
    'occupancy_grid',
    'ComplexityAnalyzer',
    'ComplexityMetrics',
    'ThresholdSet',
    'compute_thresholds',
    'classify_voxels',
    'PyramidNode',
    'VoxelPyramid',
    'build_pyramid',
    'merge_round',
    'pyramid_to_points',
    'PipelineResult',
    'VoxelPipeline',
    'EvalReport',
    'chamfer_distance',
    'evaluate_reconstruction',
    'timed_pipeline',
    'ReportFormatter'
]
