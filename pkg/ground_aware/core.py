"""Core domain types shared by every ground-aware operation."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

if TYPE_CHECKING:
    from ground_aware.config import RoiConfig


class GroundAwareError(Exception):
    """Base class for all ground-aware failures."""


class InputValidationError(GroundAwareError, ValueError):
    """Raised when an input file, label or argument violates its contract."""


class AlgorithmError(GroundAwareError, RuntimeError):
    """Raised when an algorithm cannot produce a result for valid input."""


def normalize_angle(theta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Wrap an angle (or array of angles) into [-pi, pi)."""
    shifted = np.asarray(theta, dtype=np.float64) + math.pi
    wrapped = np.mod(shifted, 2 * math.pi) - math.pi
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def cells_for(length: float, cell_size: float) -> int:
    """Number of whole cells needed to cover a length.

    The ratio is rounded to 9 decimals first so 1.5 / 0.1 counts as 15 cells,
    not 16.
    """
    return math.ceil(round(length / cell_size, 9))


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center (x, y, z), size (l, w, h) and yaw theta."""

    x: float
    y: float
    z: float
    l: float  # noqa: E741
    w: float
    h: float
    theta: float = 0.0
    label: str = "Car"

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise InputValidationError(f"Box has non-finite values: {values}")
        if min(self.l, self.w, self.h) <= 0:
            raise InputValidationError(
                f"Box dimensions must be positive, got l={self.l} w={self.w} h={self.h}"
            )
        if not -math.pi <= self.theta < math.pi:
            raise InputValidationError(f"Box theta {self.theta} outside [-pi, pi)")

    @classmethod
    def from_array(cls, values: Sequence[float], label: str = "Car") -> Box3D:
        """Build a box from ``[x, y, z, l, w, h, theta]``."""
        x, y, z, l, w, h, theta = (float(v) for v in values[:7])  # noqa: E741
        return cls(x, y, z, l, w, h, float(normalize_angle(theta)), label)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.l, self.w, self.h, self.theta],
            dtype=np.float64,
        )

    @property
    def bottom(self) -> float:
        return self.z - self.h / 2

    @property
    def top(self) -> float:
        return self.z + self.h / 2

    @property
    def diagonal(self) -> float:
        """BEV footprint diagonal sqrt(l^2 + w^2)."""
        return math.hypot(self.l, self.w)


def boxes_to_array(boxes: Sequence[Box3D]) -> np.ndarray:
    """Stack boxes into an (N, 7) array."""
    if not boxes:
        return np.zeros((0, 7), dtype=np.float64)
    return np.stack([b.as_array() for b in boxes])


@dataclass
class PointCloud:
    """Ordered lidar points in the sensor frame (x forward, y left, z up)."""

    xyz: np.ndarray
    intensity: np.ndarray
    source_id: str = ""

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
        if self.intensity.shape[0] != self.xyz.shape[0]:
            raise InputValidationError(
                f"Intensity length {self.intensity.shape[0]} does not match "
                f"{self.xyz.shape[0]} points"
            )

    @classmethod
    def empty(cls, source_id: str = "") -> PointCloud:
        return cls(np.zeros((0, 3)), np.zeros(0), source_id)

    @classmethod
    def from_array(cls, points: np.ndarray, source_id: str = "") -> PointCloud:
        """Build a cloud from an (N, 3) or (N, 4) array; missing intensity is 0."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] not in (3, 4):
            raise InputValidationError(
                f"Expected (N, 3) or (N, 4) points, got {points.shape}"
            )
        intensity = points[:, 3] if points.shape[1] == 4 else np.zeros(points.shape[0])
        return cls(points[:, :3].copy(), intensity.copy(), source_id)

    def __len__(self) -> int:
        return int(self.xyz.shape[0])

    @property
    def x(self) -> np.ndarray:
        return self.xyz[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.xyz[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.xyz[:, 2]

    def as_array(self) -> np.ndarray:
        """Return the cloud as an (N, 4) array of x, y, z, intensity."""
        return np.column_stack([self.xyz, self.intensity])

    def subset(self, selector: np.ndarray) -> PointCloud:
        """Select points by boolean mask or index array, preserving order."""
        return PointCloud(self.xyz[selector], self.intensity[selector], self.source_id)

    def with_xyz(self, xyz: np.ndarray) -> PointCloud:
        return PointCloud(xyz, self.intensity.copy(), self.source_id)

    def shifted(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> PointCloud:
        return self.with_xyz(self.xyz + np.array([dx, dy, dz]))

    @staticmethod
    def concat(
        clouds: Sequence[PointCloud], source_id: Optional[str] = None
    ) -> PointCloud:
        if not clouds:
            return PointCloud.empty(source_id or "")
        return PointCloud(
            np.concatenate([c.xyz for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
            source_id if source_id is not None else clouds[0].source_id,
        )


@dataclass(frozen=True)
class GridSpec:
    """BEV grid geometry. Rows span x (forward), columns span y (lateral)."""

    x_min: float
    y_min: float
    cell_size: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.cell_size <= 0:
            raise InputValidationError(
                f"cell_size must be positive, got {self.cell_size}"
            )
        if self.rows <= 0 or self.cols <= 0:
            raise InputValidationError(
                f"Grid must have positive dimensions, got {self.rows}x{self.cols}"
            )

    @classmethod
    def from_roi(cls, roi: RoiConfig, cell_size: float) -> GridSpec:
        return cls(
            x_min=roi.x_min,
            y_min=roi.y_min,
            cell_size=cell_size,
            rows=cells_for(roi.x_max - roi.x_min, cell_size),
            cols=cells_for(roi.y_max - roi.y_min, cell_size),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def x_max(self) -> float:
        return self.x_min + self.rows * self.cell_size

    @property
    def y_max(self) -> float:
        return self.y_min + self.cols * self.cell_size

    def cell_indices(
        self, x: np.ndarray, y: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Floor-rule cell indices; values may fall outside the grid."""
        i = np.floor((np.asarray(x) - self.x_min) / self.cell_size).astype(np.int64)
        j = np.floor((np.asarray(y) - self.y_min) / self.cell_size).astype(np.int64)
        return i, j

    def contains(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        return (i >= 0) & (i < self.rows) & (j >= 0) & (j < self.cols)

    def cell_center(
        self, i: np.ndarray, j: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        cx = self.x_min + (np.asarray(i) + 0.5) * self.cell_size
        cy = self.y_min + (np.asarray(j) + 0.5) * self.cell_size
        return cx, cy


@dataclass
class Grid:
    """A float grid with an explicit validity mask."""

    spec: GridSpec
    values: np.ndarray
    valid: np.ndarray

    fill_value = np.nan

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.spec.shape or self.valid.shape != self.spec.shape:
            raise InputValidationError(
                f"Grid arrays {self.values.shape}/{self.valid.shape} do not match "
                f"spec {self.spec.shape}"
            )

    @classmethod
    def from_grid(cls, grid: Grid) -> Grid:
        values = np.where(grid.valid, grid.values, cls.fill_value)
        return cls(grid.spec, values, grid.valid.copy())


@dataclass
class HeightMap(Grid):
    """Per-cell maximum z; invalid cells hold -inf and are never read."""

    fill_value = -np.inf

    @property
    def max_z(self) -> np.ndarray:
        return self.values


@dataclass
class GroundSurface(Grid):
    """Per-cell local ground height estimate."""

    fill_value = np.nan

    @property
    def ground_z(self) -> np.ndarray:
        return self.values

    def shifted(self, dz: float) -> GroundSurface:
        raised = np.where(self.valid, self.values + dz, np.nan)
        return GroundSurface(self.spec, raised, self.valid.copy())


@dataclass
class CountGrid:
    """Per-cell point counts."""

    spec: GridSpec
    counts: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.uint32)
        if self.counts.shape != self.spec.shape:
            raise InputValidationError(
                f"Count array {self.counts.shape} does not match spec {self.spec.shape}"
            )


@dataclass
class IntegralGrid:
    """Summed-area table: prefix[i][j] is the count over [0, i) x [0, j)."""

    spec: GridSpec
    prefix: np.ndarray = field(repr=False)

    @property
    def total(self) -> int:
        return int(self.prefix[-1, -1])
