"""Training-data augmentation: flips, yaw rotations and ground-aware transplants."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ground_aware.config import AugmentConfig, RoiConfig
from ground_aware.core import (
    Box3D,
    GridSpec,
    GroundSurface,
    IntegralGrid,
    PointCloud,
    boxes_to_array,
    normalize_angle,
)
from ground_aware.geometry import footprint_half_extents, overlaps_bev, points_in_box
from ground_aware.operations.bev_grid import (
    build_height_map,
    crop_roi,
    integral,
    region_counts,
)
from ground_aware.operations.ground_surface import GroundEstimator

logger = logging.getLogger(__name__)


@dataclass
class Scene:
    """A frame with its sensor-frame box labels."""

    cloud: PointCloud
    boxes: list[Box3D] = field(default_factory=list)


@dataclass
class Donor:
    """An annotated object's points and box, ready to be transplanted."""

    points: PointCloud
    box: Box3D


@dataclass
class TransplantResult:
    """Augmented scene plus what was placed and what could not be."""

    scene: Scene
    placed: list[Box3D]
    unplaced: list[int]

    @property
    def complete(self) -> bool:
        return not self.unplaced


def flip_scene(
    cloud: PointCloud, boxes: Sequence[Box3D]
) -> tuple[PointCloud, list[Box3D]]:
    """Mirror about the x axis: y -> -y, theta -> -theta."""
    xyz = cloud.xyz.copy()
    xyz[:, 1] = -xyz[:, 1]
    flipped = [
        Box3D(b.x, -b.y, b.z, b.l, b.w, b.h, float(normalize_angle(-b.theta)), b.label)
        for b in boxes
    ]
    return cloud.with_xyz(xyz), flipped


def rotate_scene(
    cloud: PointCloud, boxes: Sequence[Box3D], alpha: float
) -> tuple[PointCloud, list[Box3D]]:
    """Rotate points and box centers by ``alpha`` about the vertical axis."""
    c, s = math.cos(alpha), math.sin(alpha)
    xyz = cloud.xyz.copy()
    xyz[:, 0] = c * cloud.x - s * cloud.y
    xyz[:, 1] = s * cloud.x + c * cloud.y
    rotated = [
        Box3D(
            c * b.x - s * b.y,
            s * b.x + c * b.y,
            b.z,
            b.l,
            b.w,
            b.h,
            float(normalize_angle(b.theta + alpha)),
            b.label,
        )
        for b in boxes
    ]
    return cloud.with_xyz(xyz), rotated


def is_relatively_empty(
    boxes: Sequence[Box3D], max_existing_objects: Optional[int]
) -> bool:
    """Whether a frame is sparse enough to receive transplanted objects."""
    return max_existing_objects is None or len(boxes) <= max_existing_objects


def extract_donors(cloud: PointCloud, boxes: Sequence[Box3D]) -> list[Donor]:
    """Cut each labeled object's points out of a frame; empty objects are skipped."""
    donors = []
    for box in boxes:
        inside = points_in_box(cloud, box)
        if inside.any():
            donors.append(Donor(cloud.subset(inside), box))
    return donors


def _window_bounds(
    gs: GroundSurface, half_x: float, half_y: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Cell ranges of an axis-aligned window centered on every cell."""
    spec = gs.spec
    ii, jj = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    cx, cy = spec.cell_center(ii, jj)
    c = spec.cell_size
    i0 = np.floor((cx - half_x - spec.x_min) / c).astype(np.int64)
    i1 = np.ceil((cx + half_x - spec.x_min) / c).astype(np.int64)
    j0 = np.floor((cy - half_y - spec.y_min) / c).astype(np.int64)
    j1 = np.ceil((cy + half_y - spec.y_min) / c).astype(np.int64)
    return i0, i1, j0, j1


class SceneAugmenter:
    """Ground-aware object transplantation onto object-free ground."""

    def __init__(self, cfg: AugmentConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed

    def footprint_boxes(
        self, centers: np.ndarray, footprint: tuple[float, float]
    ) -> np.ndarray:
        """Margin-inflated, axis-aligned (K, 7) footprints at the given xy centers."""
        centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        boxes = np.zeros((centers.shape[0], 7))
        boxes[:, :2] = centers
        boxes[:, 3] = footprint[0] + 2 * self.cfg.margin
        boxes[:, 4] = footprint[1] + 2 * self.cfg.margin
        boxes[:, 5] = 1.0
        return boxes

    def _overlapping(
        self, centers: np.ndarray, footprint: tuple[float, float], boxes: np.ndarray
    ) -> np.ndarray:
        """Mask of centers whose inflated footprint overlaps any of ``boxes``."""
        hit = np.zeros(centers.shape[0], dtype=bool)
        half_x = footprint[0] / 2 + self.cfg.margin
        half_y = footprint[1] / 2 + self.cfg.margin
        ex, ey = footprint_half_extents(boxes)
        for box, bx, by in zip(boxes, ex, ey):
            near = np.flatnonzero(
                ~hit
                & (np.abs(centers[:, 0] - box[0]) < half_x + bx)
                & (np.abs(centers[:, 1] - box[1]) < half_y + by)
            )
            candidates = self.footprint_boxes(centers[near], footprint)
            hit[near] = overlaps_bev(candidates, box)
        return hit

    def find_free_cells(
        self,
        gs: GroundSurface,
        obstacles: IntegralGrid,
        boxes: Sequence[Box3D],
        footprint: tuple[float, float],
    ) -> np.ndarray:
        """Cells whose margin-inflated footprint window is free.

        A cell is free when its ground is valid, the window lies inside the
        grid, no non-ground point (``obstacles`` counts) falls inside it, and
        it has zero BEV IoU with every existing box. Returns (K, 2) indices.
        """
        spec = gs.spec
        half_x = footprint[0] / 2 + self.cfg.margin
        half_y = footprint[1] / 2 + self.cfg.margin
        i0, i1, j0, j1 = _window_bounds(gs, half_x, half_y)
        interior = (i0 >= 0) & (j0 >= 0) & (i1 <= spec.rows) & (j1 <= spec.cols)
        counts = region_counts(obstacles, i0, i1, j0, j1)
        free = gs.valid & interior & (counts == 0)

        existing = boxes_to_array(boxes)
        if existing.shape[0]:
            fi, fj = np.nonzero(free)
            centers = np.stack(spec.cell_center(fi, fj), axis=1)
            blocked = self._overlapping(centers, footprint, existing)
            free[fi[blocked], fj[blocked]] = False
        cells = np.argwhere(free)
        logger.debug("Found %d free cells for footprint %s", cells.shape[0], footprint)
        return cells

    def transplant_objects(
        self,
        scene: Scene,
        gs: GroundSurface,
        donors: Sequence[Donor],
        free_cells: np.ndarray,
    ) -> TransplantResult:
        """Place each donor on a randomly drawn free cell, resting on local ground.

        Donors are shifted so their box BEV center lands on the cell center and
        their lowest point touches ground_z of that cell. Cells overlapping an
        object placed earlier in the same call are not reused. Donors with no
        remaining cell are reported in ``unplaced``.
        """
        rng = np.random.Generator(np.random.PCG64(self.seed))
        candidates = np.asarray(free_cells, dtype=np.int64).reshape(-1, 2)
        centers = np.stack(
            gs.spec.cell_center(candidates[:, 0], candidates[:, 1]), axis=1
        )
        clouds = [scene.cloud]
        boxes = list(scene.boxes)
        placed: list[Box3D] = []
        unplaced: list[int] = []

        for index, donor in enumerate(donors):
            # rotated donors need the footprint's bounding extents
            ex, ey = footprint_half_extents(donor.box.as_array()[None])
            footprint = (2 * float(ex[0]), 2 * float(ey[0]))
            usable = candidates
            if placed:
                taken = self._overlapping(centers, footprint, boxes_to_array(placed))
                usable = candidates[~taken]
            if usable.shape[0] == 0:
                logger.warning(
                    "No free cell left for donor %d (%s)", index, donor.box.label
                )
                unplaced.append(index)
                continue
            i, j = (int(v) for v in usable[int(rng.integers(usable.shape[0]))])
            cx, cy = gs.spec.cell_center(i, j)
            dx, dy = float(cx) - donor.box.x, float(cy) - donor.box.y
            dz = float(gs.ground_z[i, j]) - float(donor.points.z.min())
            moved = donor.points.shifted(dx, dy, dz)
            box = Box3D(
                donor.box.x + dx,
                donor.box.y + dy,
                donor.box.z + dz,
                donor.box.l,
                donor.box.w,
                donor.box.h,
                donor.box.theta,
                donor.box.label,
            )
            clouds.append(moved)
            boxes.append(box)
            placed.append(box)

        if unplaced:
            logger.warning("Placed %d of %d donors", len(placed), len(donors))
        merged = PointCloud.concat(clouds, source_id=scene.cloud.source_id)
        augmented = Scene(merged, boxes)
        return TransplantResult(augmented, placed, unplaced)

    def augment_scene(
        self,
        scene: Scene,
        donors: Sequence[Donor],
        estimator: GroundEstimator,
        roi: RoiConfig,
        spec: GridSpec,
        tolerance: float,
        *,
        flip: bool = False,
        alpha: float = 0.0,
    ) -> TransplantResult:
        """Flip and/or rotate a frame, then transplant donors onto its free ground.

        The ground surface is estimated on the transformed frame cropped to
        ``roi``; the returned cloud keeps every point. Frames with more boxes
        than ``max_existing_objects`` receive no donors.
        """
        cloud, boxes = scene.cloud, list(scene.boxes)
        if flip:
            cloud, boxes = flip_scene(cloud, boxes)
        if alpha:
            cloud, boxes = rotate_scene(cloud, boxes, alpha)
        transformed = Scene(cloud, boxes)

        if not donors:
            return TransplantResult(transformed, [], [])
        if not is_relatively_empty(boxes, self.cfg.max_existing_objects):
            logger.info(
                "Frame has %d objects (limit %d); skipping transplant",
                len(boxes),
                self.cfg.max_existing_objects,
            )
            return TransplantResult(transformed, [], list(range(len(donors))))

        cropped = crop_roi(cloud, roi)
        gs = estimator.estimate_surface(build_height_map(cropped, spec))
        obstacles = integral(GroundEstimator.obstacle_counts(cropped, gs, tolerance))
        # one search sized for the largest donor serves every donor
        ex, ey = footprint_half_extents(boxes_to_array([d.box for d in donors]))
        footprint = (2 * float(ex.max()), 2 * float(ey.max()))
        free = self.find_free_cells(gs, obstacles, boxes, footprint)
        return self.transplant_objects(transformed, gs, donors, free)
