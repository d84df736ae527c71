"""BEV binning: region-of-interest crop, height map, counts and integral image."""

import logging

import numpy as np

from ground_aware.config import RoiConfig
from ground_aware.core import (
    CountGrid,
    GridSpec,
    HeightMap,
    InputValidationError,
    IntegralGrid,
    PointCloud,
)

logger = logging.getLogger(__name__)


def roi_mask(cloud: PointCloud, roi: RoiConfig) -> np.ndarray:
    """Which points lie inside the half-open ROI box."""
    x, y, z = cloud.x, cloud.y, cloud.z
    return (
        (x >= roi.x_min)
        & (x < roi.x_max)
        & (y >= roi.y_min)
        & (y < roi.y_max)
        & (z >= roi.z_min)
        & (z < roi.z_max)
    )


def crop_roi(cloud: PointCloud, roi: RoiConfig) -> PointCloud:
    """Keep points inside the half-open ROI box, preserving order."""
    keep = roi_mask(cloud, roi)
    logger.debug("ROI crop kept %d of %d points", int(keep.sum()), len(cloud))
    return cloud.subset(keep)


def bin_points(cloud: PointCloud, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Map every point to its (i, j) cell.

    Raises:
        InputValidationError: If a point falls outside the grid (crop first)
    """
    i, j = spec.cell_indices(cloud.x, cloud.y)
    outside = np.flatnonzero(~spec.contains(i, j))
    if outside.size:
        index = int(outside[0])
        raise InputValidationError(
            f"Point {index} at ({cloud.x[index]:.3f}, {cloud.y[index]:.3f}) lies "
            f"outside the {spec.rows}x{spec.cols} grid"
        )
    return i, j


def _flat_cells(cloud: PointCloud, spec: GridSpec) -> np.ndarray:
    i, j = bin_points(cloud, spec)
    return i * spec.cols + j


def build_height_map(cloud: PointCloud, spec: GridSpec) -> HeightMap:
    """Per-cell maximum z with a mask of non-empty cells."""
    flat = _flat_cells(cloud, spec)
    max_z = np.full(spec.rows * spec.cols, -np.inf)
    np.maximum.at(max_z, flat, cloud.z)
    valid = np.zeros(spec.rows * spec.cols, dtype=bool)
    valid[flat] = True
    return HeightMap(spec, max_z.reshape(spec.shape), valid.reshape(spec.shape))


def build_count_grid(cloud: PointCloud, spec: GridSpec) -> CountGrid:
    flat = _flat_cells(cloud, spec)
    counts = np.bincount(flat, minlength=spec.rows * spec.cols)
    return CountGrid(spec, counts.reshape(spec.shape))


def integral(counts: CountGrid) -> IntegralGrid:
    """Summed-area table with a zero first row and column."""
    prefix = np.zeros((counts.spec.rows + 1, counts.spec.cols + 1), dtype=np.int64)
    by_rows = np.cumsum(counts.counts, axis=0, dtype=np.int64)
    np.cumsum(by_rows, axis=1, out=prefix[1:, 1:])
    return IntegralGrid(counts.spec, prefix)


def region_count(ig: IntegralGrid, i0: int, i1: int, j0: int, j1: int) -> int:
    """Points in cells [i0, i1) x [j0, j1).

    Raises:
        InputValidationError: If the range is inverted or outside the grid
    """
    rows, cols = ig.spec.shape
    if not (0 <= i0 <= i1 <= rows and 0 <= j0 <= j1 <= cols):
        raise InputValidationError(
            f"Region [{i0}, {i1}) x [{j0}, {j1}) outside {rows}x{cols} grid"
        )
    p = ig.prefix
    return int(p[i1, j1] - p[i0, j1] - p[i1, j0] + p[i0, j0])


def region_counts(
    ig: IntegralGrid, i0: np.ndarray, i1: np.ndarray, j0: np.ndarray, j1: np.ndarray
) -> np.ndarray:
    """Vectorized region_count; ranges are clamped to the grid."""
    rows, cols = ig.spec.shape
    i0 = np.clip(i0, 0, rows)
    i1 = np.clip(i1, i0, rows)
    j0 = np.clip(j0, 0, cols)
    j1 = np.clip(j1, j0, cols)
    p = ig.prefix
    return p[i1, j1] - p[i0, j1] - p[i1, j0] + p[i0, j0]
