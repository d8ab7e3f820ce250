"""
Data Loader Module
Handles loading and saving point clouds (ascii PLY, whitespace-separated XYZ)
"""

import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from errors import EmptyCloudError, PointCloudParseError


@dataclass
class PointCloud:
    """Coordinate set with optional per-point unit normals"""

    points: np.ndarray  # (N, 3) float64
    normals: Optional[np.ndarray] = None  # (N, 3) unit vectors or None
    source_bounds: Optional[np.ndarray] = None  # (2, 3): min row, max row in original units
    scale: float = 1.0  # normalized = (raw - offset) * scale
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    degenerate: bool = False  # all points identical when normalized

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise ValueError(
                    f"normals count {len(self.normals)} does not match points count {len(self.points)}"
                )
        if self.source_bounds is None and len(self.points):
            self.source_bounds = np.vstack([self.points.min(axis=0), self.points.max(axis=0)])
        self.offset = np.asarray(self.offset, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        """Copy of this cloud carrying the given normals"""
        return PointCloud(
            points=self.points.copy(),
            normals=normals,
            source_bounds=self.source_bounds,
            scale=self.scale,
            offset=self.offset,
            degenerate=self.degenerate,
        )


def _unit_normals(normals: np.ndarray) -> np.ndarray:
    """Rescale normals that are off unit length by more than the tolerance; zero normals are rejected"""
    from config import NORMAL_UNIT_TOLERANCE

    lengths = np.linalg.norm(normals, axis=1)
    zero = np.flatnonzero(lengths == 0.0)
    if zero.size:
        raise PointCloudParseError(f"vertex {int(zero[0])} has a zero-length normal")
    off = np.abs(lengths - 1.0) > NORMAL_UNIT_TOLERANCE
    if np.any(off):
        normals = normals.copy()
        normals[off] /= lengths[off, None]
    return normals


def _parse_row(parts: List[str], line_number: int, what: str) -> List[float]:
    """Parse one body row; nan and inf are rejected like non-numeric text"""
    try:
        values = [float(v) for v in parts]
    except ValueError:
        raise PointCloudParseError(f"non-numeric {what}", line_number=line_number)
    if not np.all(np.isfinite(values)):
        raise PointCloudParseError(f"non-finite {what}", line_number=line_number)
    return values


class PointCloudLoader:
    """Load and validate point clouds from ascii PLY or XYZ files"""

    def __init__(self, data_source: Optional[str] = None, file_format: Optional[str] = None):
        """
        Initialize PointCloudLoader with a data source path

        Args:
            data_source: Path to the point cloud file
            file_format: "ply-ascii" or "xyz"; inferred from the extension when omitted
        """
        self.data_source = data_source
        self.file_format = file_format

    @staticmethod
    def infer_format(path: str) -> str:
        """
        Map a file extension to a supported format

        Args:
            path: File path

        Returns:
            Format name
        """
        from config import FORMAT_BY_EXTENSION

        ext = os.path.splitext(path)[1].lower()
        if ext not in FORMAT_BY_EXTENSION:
            raise ValueError(
                f"Cannot infer point cloud format from extension '{ext}'. "
                f"Use one of: {', '.join(sorted(FORMAT_BY_EXTENSION))}"
            )
        return FORMAT_BY_EXTENSION[ext]

    def load_from_ply(self, file_path: Optional[str] = None) -> PointCloud:
        """
        Load a point cloud from an ascii PLY file

        Only the vertex element is read. x, y, z are required; nx, ny, nz are
        picked up when all three are declared.

        Args:
            file_path: Path to PLY file

        Returns:
            PointCloud in original units
        """
        path = file_path or self.data_source

        if not os.path.exists(path):
            raise FileNotFoundError(f"Point cloud file not found: {path}")

        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()

        if not lines or lines[0].strip() != "ply":
            raise PointCloudParseError("missing 'ply' magic line", line_number=1)

        # Parse header to find vertex count, property layout and end of header
        vertex_count = None
        vertex_properties: List[str] = []
        elements_before_vertex = 0
        current_element = None
        header_end = None

        for idx, raw in enumerate(lines[1:], start=2):
            parts = raw.split()
            if not parts:
                continue
            keyword = parts[0]

            if keyword in ("comment", "obj_info"):
                continue
            if keyword == "format":
                if len(parts) < 2 or parts[1] != "ascii":
                    raise PointCloudParseError(
                        f"unsupported PLY format '{' '.join(parts[1:])}' (only ascii is read)",
                        line_number=idx,
                    )
            elif keyword == "element":
                if len(parts) != 3:
                    raise PointCloudParseError("element line needs a name and a count", line_number=idx)
                current_element = parts[1]
                try:
                    count = int(parts[2])
                except ValueError:
                    raise PointCloudParseError(f"element count '{parts[2]}' is not an integer", line_number=idx)
                if current_element == "vertex":
                    vertex_count = count
                elif vertex_count is None and count > 0:
                    elements_before_vertex += count
            elif keyword == "property":
                if current_element is None:
                    raise PointCloudParseError("property declared before any element", line_number=idx)
                if current_element == "vertex":
                    if len(parts) != 3:
                        raise PointCloudParseError(
                            "vertex properties must be scalar ('property <type> <name>')",
                            line_number=idx,
                        )
                    vertex_properties.append(parts[2])
            elif keyword == "end_header":
                header_end = idx
                break
            else:
                raise PointCloudParseError(f"unexpected header keyword '{keyword}'", line_number=idx)

        if header_end is None:
            raise PointCloudParseError("missing 'end_header'", line_number=len(lines))
        if vertex_count is None:
            raise PointCloudParseError("no 'element vertex' declared", line_number=header_end)
        for axis in ("x", "y", "z"):
            if axis not in vertex_properties:
                raise PointCloudParseError(f"vertex property '{axis}' not declared", line_number=header_end)
        if elements_before_vertex:
            raise PointCloudParseError(
                "vertex element must be the first non-empty element", line_number=header_end
            )

        columns = [vertex_properties.index(a) for a in ("x", "y", "z")]
        has_normals = all(n in vertex_properties for n in ("nx", "ny", "nz"))
        normal_columns = [vertex_properties.index(n) for n in ("nx", "ny", "nz")] if has_normals else []

        # Read vertex rows, skipping blank lines but tracking file line numbers
        points = []
        normals = []
        line_idx = header_end  # 0-based index of the first body line
        while len(points) < vertex_count:
            if line_idx >= len(lines):
                raise PointCloudParseError(
                    f"header declares {vertex_count} vertices but file contains {len(points)}",
                    line_number=len(lines),
                )
            parts = lines[line_idx].split()
            line_number = line_idx + 1
            line_idx += 1
            if not parts:
                continue
            if len(parts) != len(vertex_properties):
                raise PointCloudParseError(
                    f"expected {len(vertex_properties)} values, found {len(parts)}",
                    line_number=line_number,
                )
            values = _parse_row(parts, line_number, "vertex value")
            points.append([values[c] for c in columns])
            if has_normals:
                normals.append([values[c] for c in normal_columns])

        if not points:
            raise EmptyCloudError(f"Point cloud file contains zero points: {path}")

        return PointCloud(
            points=np.array(points),
            normals=_unit_normals(np.array(normals)) if has_normals else None,
        )

    def load_from_xyz(self, file_path: Optional[str] = None) -> PointCloud:
        """
        Load a point cloud from a whitespace-separated XYZ file

        Rows carry 3 values (x y z) or 6 values (x y z nx ny nz).

        Args:
            file_path: Path to XYZ file

        Returns:
            PointCloud in original units
        """
        path = file_path or self.data_source

        if not os.path.exists(path):
            raise FileNotFoundError(f"Point cloud file not found: {path}")

        rows = []
        width = None
        with open(path, "r", encoding="utf-8") as f:
            for line_number, raw in enumerate(f, start=1):
                parts = raw.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if len(parts) not in (3, 6):
                    raise PointCloudParseError(
                        f"expected 3 or 6 values, found {len(parts)}", line_number=line_number
                    )
                if width is None:
                    width = len(parts)
                elif len(parts) != width:
                    raise PointCloudParseError(
                        f"row has {len(parts)} values but earlier rows have {width}",
                        line_number=line_number,
                    )
                rows.append(_parse_row(parts, line_number, "coordinate"))

        if not rows:
            raise EmptyCloudError(f"Point cloud file contains zero points: {path}")

        data = np.array(rows)
        return PointCloud(
            points=data[:, :3],
            normals=_unit_normals(data[:, 3:6]) if width == 6 else None,
        )

    def load(self, show_progress: bool = False) -> PointCloud:
        """
        Load the configured source (format from the constructor or the extension)

        Args:
            show_progress: Whether to print a status line

        Returns:
            PointCloud in original units
        """
        if not self.data_source:
            raise ValueError("No point cloud path given")

        file_format = self.file_format or self.infer_format(self.data_source)

        if file_format == "ply-ascii":
            cloud = self.load_from_ply()
        elif file_format == "xyz":
            cloud = self.load_from_xyz()
        else:
            raise ValueError(f"Unsupported point cloud format: {file_format}")

        if show_progress:
            extra = " with normals" if cloud.has_normals else ""
            print(f"✓ Loaded {len(cloud)} points{extra} from {self.data_source}", file=sys.stderr)
        return cloud


class PointCloudWriter:
    """Write point clouds as ascii PLY or XYZ"""

    @staticmethod
    def _format_row(values) -> str:
        from config import XYZ_SIGNIFICANT_DIGITS

        return " ".join(f"{float(v):.{XYZ_SIGNIFICANT_DIGITS}g}" for v in values)

    @staticmethod
    def save_ply(cloud: PointCloud, file_path: str):
        """
        Save as ascii PLY (normals included when present)

        Args:
            cloud: Point cloud to write
            file_path: Destination path
        """
        _ensure_parent(file_path)
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(cloud)}",
            "property double x",
            "property double y",
            "property double z",
        ]
        if cloud.has_normals:
            lines += ["property double nx", "property double ny", "property double nz"]
        lines.append("end_header")

        data = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
        lines.extend(PointCloudWriter._format_row(row) for row in data)

        with open(file_path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")

    @staticmethod
    def save_xyz(cloud: PointCloud, file_path: str):
        """
        Save as XYZ text, one point per row (x y z [nx ny nz])

        Args:
            cloud: Point cloud to write
            file_path: Destination path
        """
        _ensure_parent(file_path)
        data = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
        with open(file_path, "w", encoding="utf-8") as f:
            for row in data:
                f.write(PointCloudWriter._format_row(row) + "\n")


def _ensure_parent(file_path: str):
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def load_point_cloud(path: str, file_format: Optional[str] = None, show_progress: bool = False) -> PointCloud:
    """
    Convenience function to load a point cloud

    Args:
        path: File path
        file_format: "ply-ascii" or "xyz" (inferred when omitted)
        show_progress: Whether to print a status line

    Returns:
        PointCloud in original units with source_bounds set
    """
    loader = PointCloudLoader(path, file_format)
    return loader.load(show_progress=show_progress)


def save_point_cloud(cloud: PointCloud, path: str, file_format: Optional[str] = None):
    """
    Convenience function to save a point cloud

    Args:
        cloud: Point cloud to write
        path: Destination path
        file_format: "ply-ascii" or "xyz" (inferred when omitted)
    """
    file_format = file_format or PointCloudLoader.infer_format(path)
    if file_format == "ply-ascii":
        PointCloudWriter.save_ply(cloud, path)
    elif file_format == "xyz":
        PointCloudWriter.save_xyz(cloud, path)
    else:
        raise ValueError(f"Unsupported point cloud format: {file_format}")

