"""Synthetic lidar scenes over analytic terrain, used as ground truth."""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ground_aware.config import RoiConfig
from ground_aware.core import (
    Box3D,
    GridSpec,
    GroundSurface,
    InputValidationError,
    PointCloud,
)
from ground_aware.geometry import iou_3d, points_in_box

logger = logging.getLogger(__name__)

TerrainKind = Literal["flat", "slope", "crown", "step", "terrace"]

GROUND_INTENSITY = 0.1
OBJECT_INTENSITY = 0.5
# consecutive rejected draws before a random layout is started over
LAYOUT_PATIENCE = 200
PACKING_STEP = 0.25


class RingSampling(BaseModel):
    """Spinning-sensor sampling: one ray per beam and azimuth step."""

    model_config = {"extra": "forbid"}

    beams: int = Field(default=64, ge=1)
    azimuth_step_deg: float = Field(default=0.2, gt=0, le=360)
    min_elevation_deg: float = Field(default=-24.8, gt=-90, lt=0)
    max_elevation_deg: float = Field(default=-1.0, lt=0)
    sensor_height: float = Field(default=1.73, gt=0)

    @model_validator(mode="after")
    def check_fan(self) -> "RingSampling":
        if self.min_elevation_deg >= self.max_elevation_deg:
            raise ValueError("min_elevation_deg must be below max_elevation_deg")
        return self


class TerrainSpec(BaseModel):
    """Analytic ground height plus how points are sampled on it.

    ``kind`` selects which parameters apply:

    * flat: ``z0``
    * slope: ``z0 + gx * x + gy * y``
    * crown: ``z0 + peak * (1 - (y / half_width)^2)`` for ``|y| < half_width``
    * step: ``z_low`` for ``x < step_x``, else ``z_high``
    * terrace: ``z_high`` for ``x0 <= x < x1``, else ``z_low``
    """

    model_config = {"extra": "forbid"}

    kind: TerrainKind = "flat"
    z0: float = -1.73
    gx: float = 0.0
    gy: float = 0.0
    peak: float = Field(default=0.3, ge=0)
    half_width: float = Field(default=10.0, gt=0)
    z_low: float = -1.73
    z_high: float = -1.23
    step_x: float = 0.0
    x0: float = -15.0
    x1: float = 15.0

    point_density: float = Field(
        default=10.0, gt=0, description="Ground points per m²"
    )
    object_density: float = Field(
        default=50.0, gt=0, description="Object surface points per m²"
    )
    noise_sigma: float = Field(default=0.02, ge=0)
    ring: Optional[RingSampling] = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_band(self) -> "TerrainSpec":
        if self.kind == "terrace" and not self.x0 < self.x1:
            raise ValueError("terrace needs x0 < x1")
        return self

    def height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """True ground height at (x, y)."""
        x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
        if self.kind == "flat":
            return np.full(np.broadcast(x, y).shape, self.z0)
        if self.kind == "slope":
            return self.z0 + self.gx * x + self.gy * y
        if self.kind == "crown":
            rise = 1.0 - (y / self.half_width) ** 2
            return self.z0 + self.peak * np.clip(rise, 0.0, None) + 0.0 * x
        if self.kind == "step":
            return np.where(x < self.step_x, self.z_low, self.z_high) + 0.0 * y
        raised = (x >= self.x0) & (x < self.x1)
        return np.where(raised, self.z_high, self.z_low) + 0.0 * y

    def edges(self) -> list[float]:
        """x positions where the terrain is discontinuous."""
        if self.kind == "step":
            return [self.step_x]
        if self.kind == "terrace":
            return [self.x0, self.x1]
        return []

    def rest_on_ground(self, box: Box3D) -> Box3D:
        """Copy of ``box`` lifted so its bottom touches the terrain at its center."""
        z = float(self.height(np.array(box.x), np.array(box.y))) + box.h / 2
        return Box3D(box.x, box.y, z, box.l, box.w, box.h, box.theta, box.label)


@dataclass
class SyntheticScene:
    """A generated frame and its ground truth."""

    cloud: PointCloud
    terrain: TerrainSpec
    boxes: list[Box3D]
    is_ground: np.ndarray

    def true_surface(self, spec: GridSpec) -> GroundSurface:
        """The analytic terrain sampled at every cell center."""
        ii, jj = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
        cx, cy = spec.cell_center(ii, jj)
        valid = np.ones(spec.shape, dtype=bool)
        return GroundSurface(spec, self.terrain.height(cx, cy), valid)


def _uniform_xy(
    rng: np.random.Generator, terrain: TerrainSpec, roi: RoiConfig
) -> np.ndarray:
    area = (roi.x_max - roi.x_min) * (roi.y_max - roi.y_min)
    n = int(rng.poisson(terrain.point_density * area))
    x = rng.uniform(roi.x_min, roi.x_max, n)
    y = rng.uniform(roi.y_min, roi.y_max, n)
    return np.column_stack([x, y])


def _ring_xy(ring: RingSampling, roi: RoiConfig) -> np.ndarray:
    """Where each downward ray meets a level plane ``sensor_height`` below."""
    elevations = np.radians(
        np.linspace(ring.min_elevation_deg, ring.max_elevation_deg, ring.beams)
    )
    azimuths = np.radians(np.arange(0.0, 360.0, ring.azimuth_step_deg))
    ranges = ring.sensor_height / np.tan(-elevations)
    r, a = np.meshgrid(ranges, azimuths, indexing="ij")
    xy = np.column_stack([(r * np.cos(a)).reshape(-1), (r * np.sin(a)).reshape(-1)])
    inside = (
        (xy[:, 0] >= roi.x_min)
        & (xy[:, 0] < roi.x_max)
        & (xy[:, 1] >= roi.y_min)
        & (xy[:, 1] < roi.y_max)
    )
    return xy[inside]


def _box_surface(rng: np.random.Generator, box: Box3D, density: float) -> np.ndarray:
    """Points on the top face and the four side faces of ``box``."""
    l, w, h = box.l, box.w, box.h  # noqa: E741
    faces = []
    n_top = int(rng.poisson(density * l * w))
    faces.append(
        np.column_stack(
            [
                rng.uniform(-l / 2, l / 2, n_top),
                rng.uniform(-w / 2, w / 2, n_top),
                np.full(n_top, h / 2),
            ]
        )
    )
    for along_x, side, extent in ((True, l, w), (False, w, l)):
        for sign in (-1.0, 1.0):
            n = int(rng.poisson(density * side * h))
            along = rng.uniform(-side / 2, side / 2, n)
            across = np.full(n, sign * extent / 2)
            z = rng.uniform(-h / 2, h / 2, n)
            columns = [along, across, z] if along_x else [across, along, z]
            local = np.column_stack(columns)
            faces.append(local)
    local = np.concatenate(faces)
    c, s = math.cos(box.theta), math.sin(box.theta)
    world = np.empty_like(local)
    world[:, 0] = box.x + c * local[:, 0] - s * local[:, 1]
    world[:, 1] = box.y + s * local[:, 0] + c * local[:, 1]
    world[:, 2] = box.z + local[:, 2]
    return world


def check_disjoint(boxes: Sequence[Box3D]) -> None:
    """Raise if any two boxes overlap in 3D."""
    for a in range(len(boxes)):
        for b in range(a + 1, len(boxes)):
            if iou_3d(boxes[a], boxes[b]) > 0:
                raise InputValidationError(f"Objects {a} and {b} overlap")


def generate_scene(
    terrain: TerrainSpec,
    objects: Sequence[Box3D] = (),
    roi: Optional[RoiConfig] = None,
) -> SyntheticScene:
    """Sample ground on the terrain and box-surface points for every object.

    Ground points under an object's footprint are dropped, so the ground
    there is only observable from neighboring cells. The same terrain seed
    yields a bit-identical cloud.

    Raises:
        InputValidationError: If objects overlap
    """
    roi = roi or RoiConfig()
    boxes = list(objects)
    check_disjoint(boxes)
    rng = np.random.Generator(np.random.PCG64(terrain.seed))

    xy = _ring_xy(terrain.ring, roi) if terrain.ring else _uniform_xy(rng, terrain, roi)
    z = terrain.height(xy[:, 0], xy[:, 1])
    if terrain.noise_sigma > 0:
        z = z + rng.normal(0.0, terrain.noise_sigma, z.shape[0])
    ground = PointCloud(np.column_stack([xy, z]), np.full(z.shape[0], GROUND_INTENSITY))

    keep = np.ones(len(ground), dtype=bool)
    for box in boxes:
        # footprint test at the box height catches every ground point below it
        level = np.full(len(ground), box.z)
        lifted = ground.with_xyz(np.column_stack([ground.x, ground.y, level]))
        keep &= ~points_in_box(lifted, box)
    ground = ground.subset(keep)

    parts = [ground]
    for box in boxes:
        pts = _box_surface(rng, box, terrain.object_density)
        parts.append(PointCloud(pts, np.full(pts.shape[0], OBJECT_INTENSITY)))
    cloud = PointCloud.concat(parts, source_id=f"synth-{terrain.kind}-{terrain.seed}")
    is_ground = np.zeros(len(cloud), dtype=bool)
    is_ground[: len(ground)] = True
    logger.info(
        "Generated %s scene: %d ground points, %d object points",
        terrain.kind,
        len(ground),
        len(cloud) - len(ground),
    )
    return SyntheticScene(cloud, terrain, boxes, is_ground)


def _far_enough(
    x: float, y: float, centers: Iterable[tuple[float, float]], gap: float
) -> bool:
    # bounding circles apart guarantees disjoint footprints
    return all(math.hypot(x - cx, y - cy) >= gap for cx, cy in centers)


def _packed_centers(
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    count: int,
    gap: float,
) -> list[tuple[float, float]]:
    """Greedy packing over a lattice of candidates, lowest x first, then lowest y."""
    (x0, x1), (y0, y1) = x_range, y_range
    xs = np.linspace(x0, x1, math.ceil((x1 - x0) / PACKING_STEP) + 1)
    ys = np.linspace(y0, y1, math.ceil((y1 - y0) / PACKING_STEP) + 1)
    centers: list[tuple[float, float]] = []
    for x in xs.tolist():
        for y in ys.tolist():
            if len(centers) == count:
                return centers
            if _far_enough(x, y, centers, gap):
                centers.append((x, y))
    return centers


def scatter_objects(
    terrain: TerrainSpec,
    count: int,
    roi: Optional[RoiConfig] = None,
    size: tuple[float, float, float] = (3.9, 1.6, 1.56),
    clearance: float = 1.0,
    max_attempts: int = 10_000,
) -> list[Box3D]:
    """Draw ``count`` non-overlapping boxes resting on the terrain.

    Boxes keep ``clearance`` meters from each other and from the ROI border;
    headings are uniform. Draws come from a generator seeded one past the
    terrain seed so scene sampling is unaffected.

    A random layout that rejects ``LAYOUT_PATIENCE`` draws in a row is
    abandoned and started over. When ``max_attempts`` draws produce no full
    layout, centers are packed from the low corner of the ROI instead, with
    random headings.

    Raises:
        InputValidationError: If even the packed layout cannot hold ``count`` boxes
    """
    roi = roi or RoiConfig()
    rng = np.random.Generator(np.random.PCG64(terrain.seed + 1))
    l, w, h = size  # noqa: E741
    reach = math.hypot(l, w) / 2 + clearance
    x_range = (roi.x_min + reach, roi.x_max - reach)
    y_range = (roi.y_min + reach, roi.y_max - reach)
    if count and (x_range[0] > x_range[1] or y_range[0] > y_range[1]):
        raise InputValidationError(
            f"The ROI cannot hold a {l} x {w} m object with {clearance} m clearance"
        )

    taken: list[tuple[float, float, float]] = []
    misses = 0
    for _ in range(max_attempts):
        if len(taken) == count:
            break
        x = float(rng.uniform(*x_range))
        y = float(rng.uniform(*y_range))
        theta = float(rng.uniform(-math.pi, math.pi))
        if _far_enough(x, y, ((bx, by) for bx, by, _ in taken), 2 * reach):
            taken.append((x, y, theta))
            misses = 0
            continue
        misses += 1
        if misses == LAYOUT_PATIENCE:
            logger.debug(
                "Layout stalled at %d of %d objects; starting over", len(taken), count
            )
            taken, misses = [], 0

    if len(taken) < count:
        packed = _packed_centers(x_range, y_range, count, 2 * reach)
        if len(packed) < count:
            raise InputValidationError(
                f"Could only place {len(packed)} of {count} objects"
            )
        logger.info("Random layouts kept stalling; packed %d objects", count)
        taken = [(x, y, float(rng.uniform(-math.pi, math.pi))) for x, y in packed]

    return [
        terrain.rest_on_ground(Box3D(x, y, 0.0, l, w, h, theta))
        for x, y, theta in taken
    ]
