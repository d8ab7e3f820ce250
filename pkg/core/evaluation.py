"""
Evaluation Module
Reconstruction accuracy (Chamfer, point-cloud F1), occupancy metrics and pipeline timing
"""

import math
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import confusion_matrix
from sklearn.neighbors import NearestNeighbors

import config
from core.downstream import LeafConsumer
from core.pipeline import CloudSource, VoxelPipeline
from core.pyramid import VoxelPyramid, pyramid_occupancy, pyramid_to_points
from core.voxel_grid import GridConfig, VoxelGrid, occupancy_grid, voxelize
from errors import EmptyCloudError, ResolutionMismatchError
from utils.data_loader import PointCloud
from utils.point_processor import PointProcessor

PointsLike = Union[PointCloud, np.ndarray]


@dataclass
class EvalReport:
    """Accuracy scores plus wall-clock timings for one shape or a batch"""

    chamfer: float
    f1_pc: float
    geo_iou: float
    voxel_accuracy: float
    voxel_precision: float
    voxel_recall: float
    voxel_f1: float
    voxel_iou: float
    timings: Dict[str, float] = field(default_factory=dict)
    leaf_count: Optional[int] = None  # total pyramid leaves over the batch
    cell_count: Optional[int] = None  # total level-0 cells (R^3 per shape)
    shape_count: int = 1
    mode: Optional[str] = None

    def scores(self) -> Dict[str, float]:
        return {key: getattr(self, key) for key in config.REPORT_SCORE_KEYS}

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = self.scores()
        if self.timings:
            data["timings"] = {key: self.timings[key] for key in config.TIMING_KEYS if key in self.timings}
        if self.leaf_count is not None:
            data["leaf_count"] = self.leaf_count
        if self.cell_count is not None:
            data["cell_count"] = self.cell_count
        if self.mode is not None:
            data["mode"] = self.mode
            data["shape_count"] = self.shape_count
        return data


def _as_points(cloud: PointsLike, role: str) -> np.ndarray:
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyCloudError(f"{role} point cloud is empty")
    return points


def nearest_distances(query: np.ndarray, reference: np.ndarray, threads: int = 1) -> np.ndarray:
    """Exact distance from every query point to its nearest reference point"""
    nbrs = NearestNeighbors(n_neighbors=1, algorithm="kd_tree", n_jobs=threads).fit(reference)
    distances, _ = nbrs.kneighbors(query)
    return distances[:, 0]


def chamfer_distance(a: PointsLike, b: PointsLike, threads: int = 1) -> float:
    """
    Symmetric Chamfer distance: mean NN distance a->b plus mean NN distance b->a

    Distances are Euclidean, not squared.

    Args:
        a: First cloud
        b: Second cloud
        threads: Workers for the neighbor queries

    Returns:
        Chamfer distance (>= 0)
    """
    pa = _as_points(a, "first")
    pb = _as_points(b, "second")
    return float(nearest_distances(pa, pb, threads).mean() + nearest_distances(pb, pa, threads).mean())


def f1_point_cloud(pred: PointsLike, gt: PointsLike, radius: float, threads: int = 1) -> float:
    """
    Point-cloud F1 at a distance tolerance

    Args:
        pred: Predicted cloud
        gt: Ground-truth cloud
        radius: Match tolerance (> 0); a point matches when its NN distance is <= radius
        threads: Workers for the neighbor queries

    Returns:
        Harmonic mean of precision and recall (0 when both are 0)
    """
    if not radius > 0:
        raise ValueError(f"F1 radius must be > 0, got {radius}")
    p_pred = _as_points(pred, "predicted")
    p_gt = _as_points(gt, "ground-truth")

    precision = float(np.mean(nearest_distances(p_pred, p_gt, threads) <= radius))
    recall = float(np.mean(nearest_distances(p_gt, p_pred, threads) <= radius))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ResolutionMismatchError(
            f"occupancy grids differ in resolution: {a.shape} vs {b.shape}; "
            f"build both at the same resolution"
        )


def geometric_iou(a: np.ndarray, b: np.ndarray) -> float:
    """
    |a AND b| / |a OR b| over two boolean occupancy grids (1.0 when both are empty)

    Args:
        a: Occupancy grid
        b: Occupancy grid of the same shape

    Returns:
        IoU in [0, 1]
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    _check_same_shape(a, b)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def voxel_classification_metrics(pred: np.ndarray, gt: np.ndarray) -> Tuple[float, float, float, float, float]:
    """
    Binary confusion-matrix metrics over every cell, positive class = occupied

    Precision and recall are 0 when their denominators are 0; F1 is 0 when
    precision + recall is 0; IoU is 1 when neither grid has a positive cell.

    Args:
        pred: Predicted occupancy
        gt: Ground-truth occupancy of the same shape

    Returns:
        (accuracy, precision, recall, f1, iou)
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    _check_same_shape(pred, gt)

    tn, fp, fn, tp = (int(v) for v in confusion_matrix(gt.ravel(), pred.ravel(), labels=[False, True]).ravel())
    total = tn + fp + fn + tp

    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
    return accuracy, precision, recall, f1, iou


def evaluate_reconstruction(cloud: PointCloud, grid: VoxelGrid, pyramid: VoxelPyramid,
                            radius: Optional[float] = None, threads: int = 1) -> EvalReport:
    """
    Score one pyramid against the cloud and grid it was built from

    Leaf centers are compared with the cloud (Chamfer, F1); the level-0
    occupancy implied by the pyramid is compared with the grid's own
    occupancy (IoU, voxel metrics).

    Args:
        cloud: Normalized source cloud
        grid: Level-0 grid of the cloud
        pyramid: Pyramid built from grid
        radius: F1 tolerance (defaults to one cell edge, 1 / R)
        threads: Workers for the neighbor queries

    Returns:
        EvalReport without timings
    """
    if radius is None:
        radius = config.DEFAULT_F1_RADIUS or 1.0 / grid.resolution
    centers = pyramid_to_points(pyramid)

    predicted = pyramid_occupancy(pyramid)
    truth = occupancy_grid(grid)
    accuracy, precision, recall, f1, iou = voxel_classification_metrics(predicted, truth)

    return EvalReport(
        chamfer=chamfer_distance(centers, cloud, threads),
        f1_pc=f1_point_cloud(centers, cloud, radius, threads),
        geo_iou=geometric_iou(predicted, truth),
        voxel_accuracy=accuracy,
        voxel_precision=precision,
        voxel_recall=recall,
        voxel_f1=f1,
        voxel_iou=iou,
    )


def normalize_pair(pred: PointCloud, gt: PointCloud) -> Tuple[PointCloud, PointCloud]:
    """Normalize two clouds with one shared scale and offset taken from their union bounding box"""
    _as_points(pred, "predicted")
    _as_points(gt, "ground-truth")
    union = PointProcessor.normalize_to_unit_cube(PointCloud(points=np.vstack([pred.points, gt.points])))
    split = len(pred)
    return (
        PointCloud(points=union.points[:split], source_bounds=pred.source_bounds,
                   scale=union.scale, offset=union.offset),
        PointCloud(points=union.points[split:], source_bounds=gt.source_bounds,
                   scale=union.scale, offset=union.offset),
    )


def evaluate_clouds(pred: PointCloud, gt: PointCloud, resolution: Optional[int] = None,
                    pred_resolution: Optional[int] = None, radius: Optional[float] = None,
                    threads: int = 1) -> EvalReport:
    """
    Score a predicted cloud against a ground-truth cloud

    Both clouds are normalized jointly, then voxelized for the occupancy
    scores. Grids of different resolutions cannot be compared.

    Args:
        pred: Predicted cloud (original units)
        gt: Ground-truth cloud (original units)
        resolution: Ground-truth grid resolution
        pred_resolution: Prediction grid resolution (defaults to resolution)
        radius: F1 tolerance (defaults to 1 / resolution)
        threads: Workers for the neighbor queries

    Returns:
        EvalReport without timings
    """
    gt_config = GridConfig(resolution=config.DEFAULT_RESOLUTION if resolution is None else resolution, threads=threads)
    pred_config = GridConfig(resolution=gt_config.resolution if pred_resolution is None else pred_resolution,
                             threads=threads)
    pred, gt = normalize_pair(pred, gt)

    predicted = occupancy_grid(voxelize(pred, pred_config, cloud_ref="pred"))
    truth = occupancy_grid(voxelize(gt, gt_config, cloud_ref="gt"))
    geo_iou = geometric_iou(predicted, truth)
    accuracy, precision, recall, f1, iou = voxel_classification_metrics(predicted, truth)

    if radius is None:
        radius = config.DEFAULT_F1_RADIUS or 1.0 / gt_config.resolution
    return EvalReport(
        chamfer=chamfer_distance(pred, gt, threads),
        f1_pc=f1_point_cloud(pred, gt, radius, threads),
        geo_iou=geo_iou,
        voxel_accuracy=accuracy,
        voxel_precision=precision,
        voxel_recall=recall,
        voxel_f1=f1,
        voxel_iou=iou,
    )


def average_reports(reports: List[EvalReport]) -> Dict[str, float]:
    """Mean of every score over a batch"""
    return {key: float(np.mean([getattr(r, key) for r in reports])) for key in config.REPORT_SCORE_KEYS}


def timed_pipeline(sources: Union[CloudSource, Sequence[CloudSource]], grid_config: Optional[GridConfig] = None,
                   mode: str = "dr-msv", batch_size: Optional[int] = None,
                   radius: Optional[float] = None, downstream_epochs: Optional[int] = None,
                   show_progress: bool = False) -> EvalReport:
    """
    Run the pipeline over a batch of shapes and time it

    data_prep covers load, normalize, normal estimation and voxelize; fit
    covers metrics, thresholds, classification and merging; downstream is
    the leaf consumer fed with each pyramid. Accuracy is scored after the
    clock stops, so total only holds pipeline work.

    Args:
        sources: Cloud(s) or file path(s)
        grid_config: Grid parameters
        mode: "dr-msv" or "frv"
        batch_size: Shapes per batch for the per_batch timing
        radius: F1 tolerance (defaults to 1 / R)
        downstream_epochs: Leaf consumer passes per shape (0 skips the stage)
        show_progress: Whether to print status lines

    Returns:
        EvalReport with mean scores, timings, leaf_count and cell_count
    """
    if isinstance(sources, (str, PointCloud)):
        sources = [sources]
    sources = list(sources)
    if not sources:
        raise ValueError("timed_pipeline needs at least one shape")

    grid_config = grid_config or GridConfig()
    batch_size = config.DEFAULT_BATCH_SIZE if batch_size is None else batch_size
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")

    pipeline = VoxelPipeline(grid_config, mode=mode, show_progress=show_progress)
    consumer = LeafConsumer(epochs=downstream_epochs, show_progress=show_progress)

    data_prep = 0.0
    fit = 0.0
    downstream = 0.0
    results = []
    start = time.perf_counter()
    for source in sources:
        result = pipeline.run(source)
        consumed = time.perf_counter()
        consumer.consume(result.pyramid)
        downstream += time.perf_counter() - consumed
        data_prep += result.timings["data_prep"]
        fit += result.timings["fit"]
        results.append(result)
    total = time.perf_counter() - start

    reports = [
        evaluate_reconstruction(r.cloud, r.grid, r.pyramid, radius, grid_config.threads)
        for r in results
    ]
    n_batches = math.ceil(len(sources) / batch_size)
    timings = {
        "total": total,
        "data_prep": data_prep,
        "fit": fit,
        "downstream": downstream,
        "per_batch": total / n_batches,
        "shapes_per_second": len(sources) / total if total > 0 else float("inf"),
    }

    if show_progress:
        label = config.PIPELINE_MODE_LABELS[mode]
        print(f"✓ {label}: {len(sources)} shape(s) in {total:.3f}s", file=sys.stderr)

    return EvalReport(
        **average_reports(reports),
        timings=timings,
        leaf_count=sum(len(r.pyramid) for r in results),
        cell_count=len(results) * grid_config.resolution ** 3,
        shape_count=len(sources),
        mode=mode,
    )
