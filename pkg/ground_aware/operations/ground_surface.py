"""Piecewise local ground estimation by min-filtering the BEV height map."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ground_aware.config import FilterConfig
from ground_aware.core import (
    CountGrid,
    GridSpec,
    GroundSurface,
    HeightMap,
    PointCloud,
    cells_for,
)
from ground_aware.operations.bev_grid import bin_points

logger = logging.getLogger(__name__)


@dataclass
class GroundLabels:
    """Per-point ground flags aligned with the cloud order."""

    is_ground: np.ndarray
    tolerance: float

    def __len__(self) -> int:
        return int(self.is_ground.shape[0])

    @property
    def ground_count(self) -> int:
        return int(self.is_ground.sum())


def window_cells(cfg: FilterConfig, cell_size: float) -> tuple[int, int]:
    """Half-window extents in whole cells, rounded up."""
    return (
        cells_for(cfg.half_window_x, cell_size),
        cells_for(cfg.half_window_y, cell_size),
    )


def classify_against(
    z: np.ndarray, ground_z: np.ndarray, valid: np.ndarray, tolerance: float
) -> np.ndarray:
    """Ground iff z <= ground_z + tolerance on a valid ground value (inclusive)."""
    with np.errstate(invalid="ignore"):
        return valid & (z <= ground_z + tolerance)


class GroundEstimator:
    """Estimates a local ground surface from a height map.

    The window minimum is mask-aware: empty cells are excluded rather than
    filled, and windows are clamped at the grid border.
    """

    def __init__(self, cfg: FilterConfig):
        self.cfg = cfg

    def estimate_surface(self, hm: HeightMap) -> GroundSurface:
        """Min of max_z over valid cells in each cell's rectangular window."""
        rx, ry = window_cells(self.cfg, hm.spec.cell_size)
        # +inf never wins a min and stands in for both empty cells and the border
        heights = np.where(hm.valid, hm.max_z, np.inf)
        rows_min = ndimage.minimum_filter1d(
            heights, size=2 * rx + 1, axis=0, mode="constant", cval=np.inf
        )
        ground = ndimage.minimum_filter1d(
            rows_min, size=2 * ry + 1, axis=1, mode="constant", cval=np.inf
        )
        valid = np.isfinite(ground)
        logger.debug(
            "Min-filter %dx%d cells: %d of %d cells valid",
            2 * rx + 1,
            2 * ry + 1,
            int(valid.sum()),
            valid.size,
        )
        return GroundSurface(hm.spec, np.where(valid, ground, np.nan), valid)

    @staticmethod
    def interpolate_surface(gs: GroundSurface, k: float) -> GroundSurface:
        """Extend the surface into invalid cells within ceil(k / cell) dilation steps.

        Each step fills an invalid cell from its valid 8-neighbours, taking
        the minimum, so a filled cell carries the lowest value among the
        nearest (Chebyshev) valid cells. Valid cells never change.
        """
        steps = cells_for(k, gs.spec.cell_size) if k > 0 else 0
        values = np.where(gs.valid, gs.ground_z, np.inf)
        valid = gs.valid.copy()
        for _ in range(steps):
            if valid.all():
                break
            eroded = ndimage.minimum_filter(
                values, size=3, mode="constant", cval=np.inf
            )
            newly = ~valid & np.isfinite(eroded)
            if not newly.any():
                break
            values[newly] = eroded[newly]
            valid |= newly
        return GroundSurface(gs.spec, np.where(valid, values, np.nan), valid)

    @staticmethod
    def classify_points(
        cloud: PointCloud, gs: GroundSurface, tolerance: float
    ) -> GroundLabels:
        """Label points at most ``tolerance`` above their cell's ground as ground."""
        i, j = bin_points(cloud, gs.spec)
        labels = classify_against(cloud.z, gs.ground_z[i, j], gs.valid[i, j], tolerance)
        return GroundLabels(labels, tolerance)

    @classmethod
    def obstacle_counts(
        cls, cloud: PointCloud, gs: GroundSurface, tolerance: float
    ) -> CountGrid:
        """Per-cell counts of points that are not ground."""
        labels = cls.classify_points(cloud, gs, tolerance)
        i, j = bin_points(cloud, gs.spec)
        obstacle = ~labels.is_ground
        counts = np.zeros(gs.spec.shape, dtype=np.int64)
        np.add.at(counts, (i[obstacle], j[obstacle]), 1)
        return CountGrid(gs.spec, counts)


def ground_at(
    gs: GroundSurface, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Ground height and validity at arbitrary xy; outside the grid is invalid."""
    spec: GridSpec = gs.spec
    i, j = spec.cell_indices(x, y)
    inside = spec.contains(i, j)
    ic, jc = np.clip(i, 0, spec.rows - 1), np.clip(j, 0, spec.cols - 1)
    valid = inside & gs.valid[ic, jc]
    return np.where(valid, gs.ground_z[ic, jc], math.nan), valid
