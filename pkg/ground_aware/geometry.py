"""Oriented box geometry: representations, rotated IoU, NMS and matching."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Union

import numpy as np

from ground_aware.core import Box3D, InputValidationError, PointCloud, normalize_angle

SLIVER_AREA = 1e-12
FACE_TOLERANCE = 1e-9
_AXIS_ALIGNED = (0.0, math.pi / 2, -math.pi / 2, -math.pi)

BoxLike = Union[Box3D, np.ndarray, Sequence[float]]
Polygon = list[tuple[float, float]]


class UnsupportedRepresentationError(InputValidationError):
    """Raised when a box cannot be expressed in the requested encoding."""


@dataclass(frozen=True)
class Box4CA:
    """Axis-aligned footprint corners plus top (h1) and bottom (h2) heights."""

    x1: float
    y1: float
    x2: float
    y2: float
    h1: float
    h2: float

    def __post_init__(self) -> None:
        if not self.h1 > self.h2:
            raise InputValidationError(
                f"Box4CA top h1={self.h1} must exceed bottom h2={self.h2}"
            )

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2, self.h1, self.h2)


@dataclass(frozen=True)
class OrientationCode:
    """Yaw as a unit vector plus a direction class."""

    cx: float
    cy: float
    dir: int


class Difficulty(str, Enum):
    EASY = "easy"
    MODERATE = "moderate"
    HARD = "hard"


EASY_MIN_POINTS = 685
MODERATE_MIN_POINTS = 126
# BEV distance bands, in meters from the sensor
EASY_MAX_RANGE = 20.0
HARD_MAX_RANGE = 50.0


def _as_array(box: BoxLike) -> np.ndarray:
    if isinstance(box, Box3D):
        return box.as_array()
    return np.asarray(box, dtype=np.float64)[:7]


def box_corners(box: BoxLike) -> np.ndarray:
    """Footprint corners (4, 2), counter-clockwise."""
    x, y, _, l, w, _, theta = _as_array(box)  # noqa: E741
    c, s = math.cos(theta), math.sin(theta)
    local = np.array([[l, -w], [l, w], [-l, w], [-l, -w]]) / 2
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def footprint_half_extents(boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half extents of the axis-aligned bounds of (N, 7) rotated footprints."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    c, s = np.abs(np.cos(boxes[:, 6])), np.abs(np.sin(boxes[:, 6]))
    hl, hw = boxes[:, 3] / 2, boxes[:, 4] / 2
    return hl * c + hw * s, hl * s + hw * c


def _corners_and_axes(boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(N, 4, 2) footprint corners and (N, 2, 2) edge normals."""
    c, s = np.cos(boxes[:, 6]), np.sin(boxes[:, 6])
    local = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=np.float64) / 2
    u = local[None, :, 0] * boxes[:, 3, None]
    v = local[None, :, 1] * boxes[:, 4, None]
    corners = np.stack(
        [
            boxes[:, 0, None] + c[:, None] * u - s[:, None] * v,
            boxes[:, 1, None] + s[:, None] * u + c[:, None] * v,
        ],
        axis=-1,
    )
    axes = np.stack([np.column_stack([c, s]), np.column_stack([-s, c])], axis=1)
    return corners, axes


def overlaps_bev(boxes: np.ndarray, box: BoxLike) -> np.ndarray:
    """Which of the (N, 7) ``boxes`` share positive BEV area with ``box``.

    Separating-axis test over the four edge normals; footprints that only
    touch are disjoint.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    other = _as_array(box)[None]
    ca, axes_a = _corners_and_axes(boxes)
    cb, axes_b = _corners_and_axes(other)
    axes = np.concatenate([axes_a, np.broadcast_to(axes_b, axes_a.shape)], axis=1)
    # (N, 4 axes, 4 corners)
    pa = np.einsum("nkd,nad->nak", ca, axes)
    pb = np.einsum("kd,nad->nak", cb[0], axes)
    separated = (pa.max(axis=2) <= pb.min(axis=2)) | (pb.max(axis=2) <= pa.min(axis=2))
    return ~separated.any(axis=1)


def polygon_area(poly: Polygon) -> float:
    """Shoelace area (absolute)."""
    if len(poly) < 3:
        return 0.0
    total = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        total += x0 * y1 - x1 * y0
    return abs(total) / 2


def clip_polygon(subject: Polygon, clip: Polygon) -> Polygon:
    """Sutherland-Hodgman clipping of ``subject`` by a convex CCW ``clip``."""
    output = subject
    cp1 = clip[-1]
    for cp2 in clip:
        if not output:
            return []
        source, output = output, []
        ex, ey = cp2[0] - cp1[0], cp2[1] - cp1[1]

        def side(p: tuple[float, float]) -> float:
            return ex * (p[1] - cp1[1]) - ey * (p[0] - cp1[0])  # noqa: B023

        s = source[-1]
        s_side = side(s)
        for e in source:
            e_side = side(e)
            if e_side >= 0:
                if s_side < 0:
                    output.append(_intersect(s, e, s_side, e_side))
                output.append(e)
            elif s_side >= 0:
                output.append(_intersect(s, e, s_side, e_side))
            s, s_side = e, e_side
        cp1 = cp2
    return output


def _intersect(
    s: tuple[float, float], e: tuple[float, float], s_side: float, e_side: float
) -> tuple[float, float]:
    t = s_side / (s_side - e_side)
    return (s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1]))


def bev_intersection(a: BoxLike, b: BoxLike) -> float:
    """Area shared by two rotated footprints; slivers count as empty."""
    pa = [tuple(p) for p in box_corners(a).tolist()]
    pb = [tuple(p) for p in box_corners(b).tolist()]
    area = polygon_area(clip_polygon(pa, pb))  # type: ignore[arg-type]
    return area if area >= SLIVER_AREA else 0.0


def iou_bev(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union of the two BEV footprints."""
    va, vb = _as_array(a), _as_array(b)
    inter = bev_intersection(va, vb)
    if inter == 0.0:
        return 0.0
    union = va[3] * va[4] + vb[3] * vb[4] - inter
    return float(min(1.0, inter / union))


def iou_3d(a: BoxLike, b: BoxLike) -> float:
    """Volume IoU: BEV intersection times vertical overlap over the union."""
    va, vb = _as_array(a), _as_array(b)
    top = min(va[2] + va[5] / 2, vb[2] + vb[5] / 2)
    overlap = top - max(va[2] - va[5] / 2, vb[2] - vb[5] / 2)
    if overlap <= 0:
        return 0.0
    inter = bev_intersection(va, vb) * overlap
    if inter == 0.0:
        return 0.0
    union = va[3] * va[4] * va[5] + vb[3] * vb[4] * vb[5] - inter
    return float(min(1.0, inter / union))


def _aabb(boxes: np.ndarray) -> np.ndarray:
    ex, ey = footprint_half_extents(boxes)
    x, y = boxes[:, 0], boxes[:, 1]
    return np.column_stack([x - ex, y - ey, x + ex, y + ey])


def _aabb_overlaps(bounds: np.ndarray, index: int, others: np.ndarray) -> np.ndarray:
    b = bounds[index]
    o = bounds[others]
    return (o[:, 0] < b[2]) & (o[:, 2] > b[0]) & (o[:, 1] < b[3]) & (o[:, 3] > b[1])


def nms(
    boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, top_n: int
) -> list[int]:
    """Greedy non-maximum suppression on BEV IoU.

    Boxes are visited by descending score; equal scores keep the lower index
    first. A box is dropped when its IoU with any kept box exceeds the
    threshold. At most ``top_n`` indices are returned.

    Raises:
        InputValidationError: If boxes and scores differ in length
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 7)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if boxes.shape[0] != scores.shape[0]:
        raise InputValidationError(
            f"nms got {boxes.shape[0]} boxes but {scores.shape[0]} scores"
        )
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    bounds = _aabb(boxes)
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    keep: list[int] = []
    for rank, index in enumerate(order):
        if suppressed[index]:
            continue
        keep.append(int(index))
        if len(keep) >= top_n:
            break
        rest = order[rank + 1 :]
        rest = rest[~suppressed[rest]]
        for other in rest[_aabb_overlaps(bounds, index, rest)]:
            if iou_bev(boxes[index], boxes[other]) > iou_threshold:
                suppressed[other] = True
    return keep


@dataclass(frozen=True)
class MatchResult:
    """Per-detection assignment: matched ground-truth index (-1 if none) and IoU."""

    gt_index: np.ndarray
    iou: np.ndarray
    true_positive: np.ndarray

    @property
    def tp(self) -> int:
        return int(self.true_positive.sum())

    @property
    def fp(self) -> int:
        return int((~self.true_positive).sum())


def iou_matrix(
    dets: np.ndarray, gts: np.ndarray, mode: Literal["bev", "3d"] = "bev"
) -> np.ndarray:
    fn = iou_bev if mode == "bev" else iou_3d
    dets = np.asarray(dets, dtype=np.float64).reshape(-1, 7)
    gts = np.asarray(gts, dtype=np.float64).reshape(-1, 7)
    out = np.zeros((dets.shape[0], gts.shape[0]))
    if out.size == 0:
        return out
    db, gb = _aabb(dets), _aabb(gts)
    for d in range(dets.shape[0]):
        near = (gb[:, 0] < db[d, 2]) & (gb[:, 2] > db[d, 0])
        near &= (gb[:, 1] < db[d, 3]) & (gb[:, 3] > db[d, 1])
        for g in np.flatnonzero(near):
            out[d, g] = fn(dets[d], gts[g])
    return out


def match_detections(
    dets: np.ndarray, gts: np.ndarray, tau: float, mode: Literal["bev", "3d"] = "bev"
) -> MatchResult:
    """Greedy one-to-one matching by descending IoU; TP iff IoU >= tau.

    Raises:
        InputValidationError: If tau is outside (0, 1)
    """
    if not 0 < tau < 1:
        raise InputValidationError(f"Match threshold tau must lie in (0, 1), got {tau}")
    ious = iou_matrix(dets, gts, mode)
    n_det = ious.shape[0]
    gt_index = np.full(n_det, -1, dtype=np.int64)
    matched_iou = np.zeros(n_det)
    if ious.size:
        det_idx, gt_idx = np.nonzero(ious >= tau)
        pair_ious = ious[det_idx, gt_idx]
        taken = np.zeros(ious.shape[1], dtype=bool)
        for p in np.lexsort((gt_idx, det_idx, -pair_ious)):
            d, g = det_idx[p], gt_idx[p]
            if gt_index[d] >= 0 or taken[g]:
                continue
            gt_index[d], matched_iou[d] = g, pair_ious[p]
            taken[g] = True
    return MatchResult(gt_index, matched_iou, gt_index >= 0)


def _axis_aligned_kind(theta: float) -> int:
    """0 for yaw along x, 1 for yaw along y; raises otherwise."""
    for index, ref in enumerate(_AXIS_ALIGNED):
        if abs(theta - ref) < 1e-12:
            return index % 2
    raise UnsupportedRepresentationError(
        f"Box4CA only represents axis-aligned boxes; "
        f"theta={theta} is not one of 0, ±pi/2, pi"
    )


def box3d_to_4ca(b: Box3D) -> Box4CA:
    """Convert an axis-aligned box to {x1, y1, x2, y2, h1, h2}.

    Raises:
        UnsupportedRepresentationError: If theta is not a multiple of pi/2
    """
    along_y = _axis_aligned_kind(b.theta)
    half_x, half_y = (b.w / 2, b.l / 2) if along_y else (b.l / 2, b.w / 2)
    return Box4CA(
        b.x - half_x,
        b.y - half_y,
        b.x + half_x,
        b.y + half_y,
        b.z + b.h / 2,
        b.z - b.h / 2,
    )


def ca4_to_box3d(c: Box4CA, theta: float, label: str = "Car") -> Box3D:
    """Inverse of :func:`box3d_to_4ca` for the given axis-aligned yaw."""
    theta = float(normalize_angle(theta))
    along_y = _axis_aligned_kind(theta)
    size_x, size_y = c.x2 - c.x1, c.y2 - c.y1
    l, w = (size_y, size_x) if along_y else (size_x, size_y)  # noqa: E741
    return Box3D(
        (c.x1 + c.x2) / 2,
        (c.y1 + c.y2) / 2,
        (c.h1 + c.h2) / 2,
        l,
        w,
        c.h1 - c.h2,
        theta,
        label,
    )


def encode_orientation(theta: float) -> OrientationCode:
    theta = float(normalize_angle(theta))
    direction = 1 if -math.pi / 2 < theta <= math.pi / 2 else 0
    return OrientationCode(math.cos(theta), math.sin(theta), direction)


def decode_orientation(code: OrientationCode) -> float:
    return float(normalize_angle(math.atan2(code.cy, code.cx)))


def points_in_box(cloud: PointCloud, box: BoxLike) -> np.ndarray:
    """Boolean mask of points inside the oriented box, faces included.

    Faces are widened by ``FACE_TOLERANCE`` so points sampled on a face stay
    inside after a rigid transform.
    """
    x, y, z, l, w, h, theta = _as_array(box)  # noqa: E741
    dx, dy = cloud.x - x, cloud.y - y
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    tol = FACE_TOLERANCE
    return (
        (np.abs(u) <= l / 2 + tol)
        & (np.abs(v) <= w / 2 + tol)
        & (np.abs(cloud.z - z) <= h / 2 + tol)
    )


def difficulty(box: BoxLike, cloud: PointCloud) -> Difficulty:
    """Density category from the number of points inside the box."""
    count = int(points_in_box(cloud, box).sum())
    if count >= EASY_MIN_POINTS:
        return Difficulty.EASY
    if count >= MODERATE_MIN_POINTS:
        return Difficulty.MODERATE
    return Difficulty.HARD


def range_masks(x: np.ndarray, y: np.ndarray) -> dict[Difficulty, np.ndarray]:
    """Distance categories of BEV positions; points beyond 50 m are in neither."""
    r = np.hypot(x, y)
    return {
        Difficulty.EASY: r <= EASY_MAX_RANGE,
        Difficulty.HARD: (r > EASY_MAX_RANGE) & (r <= HARD_MAX_RANGE),
    }


def range_difficulty(box: BoxLike) -> Optional[Difficulty]:
    """Distance category of a box center, or None past the hard band."""
    x, y = _as_array(box)[:2]
    r = math.hypot(float(x), float(y))
    if r <= EASY_MAX_RANGE:
        return Difficulty.EASY
    if r <= HARD_MAX_RANGE:
        return Difficulty.HARD
    return None
