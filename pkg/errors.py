"""
Errors Module
Exception hierarchy shared by the toolkit

Validation problems derive from ValueError so callers (and the CLI) can treat
them as usage errors; broken internal state derives from RuntimeError.
"""

from typing import Optional


class VoxelToolkitError(Exception):
    """Base class for every toolkit error"""


class PointCloudParseError(VoxelToolkitError, ValueError):
    """Malformed point cloud file"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyCloudError(VoxelToolkitError, ValueError):
    """A point cloud with zero points reached code that needs points"""


class NotNormalizedError(VoxelToolkitError, ValueError):
    """A coordinate lies outside the unit cube"""

    def __init__(self, point_index: int, point):
        self.point_index = point_index
        super().__init__(
            f"point {point_index} at {tuple(float(c) for c in point)} lies outside [0, 1]^3; "
            f"run normalize_to_unit_cube first"
        )


class InsufficientPointsError(VoxelToolkitError, ValueError):
    """Not enough points for the requested neighborhood size"""


class MissingNormalsError(VoxelToolkitError, ValueError):
    """Normals are required but the cloud has none"""


class EmptyCellError(VoxelToolkitError, ValueError):
    """A per-cell metric was asked for an empty cell"""


class ThresholdError(VoxelToolkitError, ValueError):
    """Thresholds cannot be derived from the grid"""


class UnlabeledCellError(VoxelToolkitError, ValueError):
    """An occupied cell has no complexity label"""


class DimensionMismatchError(VoxelToolkitError, ValueError):
    """Array shapes do not line up"""


class ResolutionMismatchError(VoxelToolkitError, ValueError):
    """Two occupancy grids have different resolutions"""


class TokenFormatError(VoxelToolkitError, ValueError):
    """Malformed token matrix CSV"""

    def __init__(self, message: str, row_number: Optional[int] = None):
        self.row_number = row_number
        if row_number is not None:
            message = f"row {row_number}: {message}"
        super().__init__(message)


class PyramidConsistencyError(VoxelToolkitError, RuntimeError):
    """A pyramid invariant was breached"""


class TrainingDivergenceError(VoxelToolkitError, RuntimeError):
    """Training loss became non-finite"""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}; lower the step size")
