"""
Configuration module for the Voxel Pyramid Toolkit
Defines global constants for gridding, complexity thresholds, evaluation and pooling

Every value here is a default. The CLI can override them per run with flags or
with a key=value file passed through --config (see cli.py). Environment
variables are deliberately not read so two runs with the same flags and seed
produce identical output.
"""

import math

# ============================================================================
# GRID CONFIGURATION
# ============================================================================
DEFAULT_RESOLUTION = 16  # Cells per axis of the initial grid (power of two)
MIN_RESOLUTION = 2
DEFAULT_PERCENTILE = 75.0  # Threshold percentile for every complexity metric
DEFAULT_CLASSIFICATION_RULE = "any"  # "any": one metric >= tau is enough, "all": every metric must reach tau
CLASSIFICATION_RULES = ("any", "all")

# ============================================================================
# POINT CLOUD I/O
# ============================================================================
SUPPORTED_FORMATS = ("ply-ascii", "xyz")
FORMAT_BY_EXTENSION = {
    ".ply": "ply-ascii",
    ".xyz": "xyz",
    ".txt": "xyz",
}
XYZ_SIGNIFICANT_DIGITS = 17  # 17 digits round-trip any float64 bit-exactly
NORMAL_UNIT_TOLERANCE = 1e-6

# ============================================================================
# NORMAL ESTIMATION
# ============================================================================
DEFAULT_NORMAL_NEIGHBORS = 10  # k for the k-NN covariance
MIN_NORMAL_NEIGHBORS = 3

# ============================================================================
# COMPLEXITY METRICS
# ============================================================================
# Order matters: it is the column order of the metrics CSV and of threshold reports
METRIC_NAMES = (
    "d",
    "sigma_s",
    "normal_variation",
    "lambda_linear",
    "lambda_planar",
    "H_s",
    "kappa",
)

METRIC_DESCRIPTIONS = {
    "d": "Point density, points per unit volume",
    "sigma_s": "RMS distance to the total-least-squares plane",
    "normal_variation": "1 - mean alignment of normals with their mean direction",
    "lambda_linear": "Linearity (l1 - l2) / l1",
    "lambda_planar": "Planarity (l2 - l3) / l1",
    "H_s": "Entropy of the point split over the 8 sub-octants (nats)",
    "kappa": "Surface variation l3 / (l1 + l2 + l3)",
}

MIN_POINTS_FOR_PCA = 3
RANK_TOLERANCE = 1e-12  # Relative eigenvalue size below which a direction counts as absent
MAX_ENTROPY = math.log(8)
MAX_CURVATURE = 1.0 / 3.0

METRICS_CSV_COLUMNS = [
    "i", "j", "k", "n",
    "d", "sigma_s", "normal_variation", "lambda_linear", "lambda_planar", "H_s", "kappa",
    "label",
]

# ============================================================================
# EVALUATION
# ============================================================================
DEFAULT_F1_RADIUS = None  # None = one cell edge, 1 / resolution
REPORT_FORMATS = ("json", "text")
DEFAULT_REPORT_FORMAT = "text"
REPORT_SCORE_KEYS = [
    "chamfer",
    "f1_pc",
    "geo_iou",
    "voxel_accuracy",
    "voxel_precision",
    "voxel_recall",
    "voxel_f1",
    "voxel_iou",
]
TIMING_KEYS = ["total", "data_prep", "fit", "downstream", "per_batch", "shapes_per_second"]

# Labels for the bench comparison table (desk-scale analogue of TT / DP / MF / BT / SP)
BENCH_COLUMN_LABELS = {
    "total": "Total (s)",
    "data_prep": "Data prep (s)",
    "fit": "Fit (s)",
    "downstream": "Downstream (s)",
    "per_batch": "Per batch (s)",
    "shapes_per_second": "Shapes/s",
}
BENCH_MODES = ("both", "frv-only", "drmsv-only")
BENCH_MODE_PIPELINES = {
    "both": ("frv", "dr-msv"),
    "frv-only": ("frv",),
    "drmsv-only": ("dr-msv",),
}
PIPELINE_MODES = ("dr-msv", "frv")  # complexity-driven merging / fixed-resolution baseline
PIPELINE_MODE_LABELS = {"dr-msv": "DR-MSV", "frv": "FRV"}
DEFAULT_BATCH_SIZE = 1

# Downstream consumer timed after each run: one token per leaf, online SGD
DOWNSTREAM_EPOCHS = 20  # 0 skips the stage
DOWNSTREAM_STEP_SIZE = 0.01
DOWNSTREAM_HIDDEN = 16
LEAF_TOKEN_WIDTH = 6

# ============================================================================
# TOKEN POOLING (TAP-LME)
# ============================================================================
POOLING_VARIANTS = (
    "baseline_max",
    "tap_only",
    "tap_res_fixed",
    "tap_res_learnt",
    "tap_weight_only",
)
FIXED_FUSION_LAMBDA = 0.5
INITIAL_LAMBDA_RAW = 0.0  # logistic(0) = 0.5

DEFAULT_EPOCHS = 200
DEFAULT_STEP_SIZE = 0.5

# Synthetic attention task used by `pool --synthetic --train`
SYNTHETIC_SAMPLES = 64
SYNTHETIC_SEQ_LEN = 8
SYNTHETIC_WIDTH = 4
SYNTHETIC_SHARPNESS = 3.0  # Softmax sharpness of the target mix on feature 0

# Finite-difference gradient check
GRAD_CHECK_STEP = 1e-5
GRAD_CHECK_CONFIGS = 50
GRAD_CHECK_MAX_SEQ_LEN = 8
GRAD_CHECK_MAX_WIDTH = 6
GRAD_CHECK_DENOMINATOR_FLOOR = 1e-3  # Keeps relative error meaningful for near-zero gradients
GRAD_CHECK_TOLERANCE = 1e-4
GRAD_CHECK_KINK_MARGIN = 1e-3  # Redraw configs this close to a ReLU or max-pool switch

# ============================================================================
# FIXTURES & RUNTIME
# ============================================================================
FIXTURE_NAMES = ("plane", "sphere", "cube_edges", "line", "mixed")
DEFAULT_FIXTURE_POINTS = 20000
DEFAULT_SEED = 0
DEFAULT_THREADS = 1  # 1 = reproducible single-thread mode

# CLI exit codes
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2
