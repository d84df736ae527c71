"""Anchor placement on the estimated ground and integral-image pruning."""

import logging
from dataclasses import dataclass

import numpy as np

from ground_aware.config import AnchorConfig
from ground_aware.core import GridSpec, GroundSurface, IntegralGrid, cells_for
from ground_aware.geometry import footprint_half_extents, nms
from ground_aware.operations.bev_grid import region_counts
from ground_aware.operations.ground_surface import GroundEstimator

logger = logging.getLogger(__name__)


@dataclass
class AnchorSet:
    """Candidate boxes as an (N, 7) array with per-anchor counts and keep flags."""

    boxes: np.ndarray
    point_counts: np.ndarray
    kept: np.ndarray

    def __post_init__(self) -> None:
        n = self.boxes.shape[0]
        if self.point_counts.shape[0] != n or self.kept.shape[0] != n:
            raise ValueError("AnchorSet arrays must have equal length")

    def __len__(self) -> int:
        return int(self.boxes.shape[0])

    @property
    def kept_count(self) -> int:
        return int(self.kept.sum())

    def kept_only(self) -> "AnchorSet":
        keep = self.kept
        return AnchorSet(self.boxes[keep], self.point_counts[keep], self.kept[keep])


def footprint_cells(boxes: np.ndarray, spec: GridSpec) -> tuple[np.ndarray, ...]:
    """Cell range [i0, i1) x [j0, j1) covering each footprint's axis-aligned bounds.

    Ranges are clamped to the grid.
    """
    ex, ey = footprint_half_extents(boxes)
    c = spec.cell_size
    i0 = np.floor((boxes[:, 0] - ex - spec.x_min) / c).astype(np.int64)
    i1 = np.ceil((boxes[:, 0] + ex - spec.x_min) / c).astype(np.int64)
    j0 = np.floor((boxes[:, 1] - ey - spec.y_min) / c).astype(np.int64)
    j1 = np.ceil((boxes[:, 1] + ey - spec.y_min) / c).astype(np.int64)
    i0 = np.clip(i0, 0, spec.rows)
    j0 = np.clip(j0, 0, spec.cols)
    return i0, np.clip(i1, i0, spec.rows), j0, np.clip(j1, j0, spec.cols)


class AnchorEngine:
    """Places anchors over a regular BEV lattice on the ground surface."""

    def __init__(self, cfg: AnchorConfig):
        self.cfg = cfg

    def lattice(self, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        """Lattice point coordinates at stride-cell centers."""
        stride = self.cfg.stride
        nx = cells_for(spec.rows * spec.cell_size, stride)
        ny = cells_for(spec.cols * spec.cell_size, stride)
        xs = spec.x_min + (np.arange(nx) + 0.5) * stride
        ys = spec.y_min + (np.arange(ny) + 0.5) * stride
        # keep lattice points inside the grid when the extent is not a stride multiple
        return xs[xs < spec.x_max], ys[ys < spec.y_max]

    def generate_anchors(self, gs: GroundSurface) -> AnchorSet:
        """One anchor per lattice point x size x orientation on valid ground.

        The surface is first interpolated with k = d / 2 of the largest size
        template so anchors can sit where the raw estimate has gaps.
        """
        surface = GroundEstimator.interpolate_surface(gs, self.cfg.interpolation_radius)
        xs, ys = self.lattice(gs.spec)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        gx, gy = gx.reshape(-1), gy.reshape(-1)
        i, j = gs.spec.cell_indices(gx, gy)
        on_ground = surface.valid[i, j]
        ground = surface.ground_z[i[on_ground], j[on_ground]]
        gx, gy = gx[on_ground], gy[on_ground]

        sizes = np.asarray(self.cfg.sizes, dtype=np.float64)
        yaws = np.asarray(self.cfg.orientations, dtype=np.float64)
        per_point = sizes.shape[0] * yaws.shape[0]
        # lattice-major, then size, then orientation
        size_idx = np.repeat(np.arange(sizes.shape[0]), yaws.shape[0])
        yaw_idx = np.tile(np.arange(yaws.shape[0]), sizes.shape[0])
        n = gx.shape[0] * per_point
        boxes = np.empty((n, 7))
        boxes[:, 0] = np.repeat(gx, per_point)
        boxes[:, 1] = np.repeat(gy, per_point)
        boxes[:, 3:6] = np.tile(sizes[size_idx], (gx.shape[0], 1))
        boxes[:, 2] = np.repeat(ground, per_point) + boxes[:, 5] / 2
        boxes[:, 6] = np.tile(yaws[yaw_idx], gx.shape[0])
        logger.debug(
            "Placed %d anchors on %d of %d lattice points",
            n,
            gx.shape[0],
            on_ground.shape[0],
        )
        return AnchorSet(boxes, np.zeros(n, dtype=np.int64), np.ones(n, dtype=bool))

    def prune_anchors(self, anchors: AnchorSet, ig: IntegralGrid) -> AnchorSet:
        """Count points under each cell-aligned footprint; keep >= min_points."""
        counts = region_counts(ig, *footprint_cells(anchors.boxes, ig.spec))
        kept = counts >= self.cfg.min_points
        logger.info(
            "Anchor pruning kept %d of %d anchors", int(kept.sum()), len(anchors)
        )
        return AnchorSet(anchors.boxes, counts.astype(np.int64), kept)

    def select(self, anchors: AnchorSet, scores: np.ndarray) -> list[int]:
        """NMS over kept anchors; returns indices into ``anchors``."""
        kept_idx = np.flatnonzero(anchors.kept)
        chosen = nms(
            anchors.boxes[kept_idx],
            np.asarray(scores)[kept_idx],
            self.cfg.nms_iou_threshold,
            self.cfg.nms_top_n,
        )
        return [int(kept_idx[c]) for c in chosen]
