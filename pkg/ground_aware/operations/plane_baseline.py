"""Single-plane RANSAC ground model, the uniplanar comparator."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from ground_aware.config import RansacConfig
from ground_aware.core import AlgorithmError, InputValidationError, PointCloud
from ground_aware.operations.ground_surface import GroundLabels, classify_against

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-9
_BATCH = 32


@dataclass(frozen=True)
class PlaneModel:
    """Plane a*x + b*y + c*z + d = 0 with unit normal and c > 0."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def from_normal(cls, normal: np.ndarray, d: float) -> "PlaneModel":
        """Normalize to a unit, upward-facing normal.

        Raises:
            AlgorithmError: If the normal is zero or the plane is vertical
        """
        norm = float(np.linalg.norm(normal))
        if norm == 0.0:
            raise AlgorithmError("Plane normal has zero length")
        sign = 1.0 if normal[2] > 0 else -1.0
        a, b, c = (float(v) * sign / norm + 0.0 for v in normal)
        if c <= 0:
            raise AlgorithmError("Plane is vertical and cannot model ground")
        return cls(a, b, c, d * sign / norm + 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    def signed_distance(self, xyz: np.ndarray) -> np.ndarray:
        return xyz @ self.as_array()[:3] + self.d


@dataclass(frozen=True)
class PlaneFit:
    """RANSAC result: the model, its inlier count and hypotheses evaluated."""

    model: PlaneModel
    inliers: int
    iterations: int

    def to_json(self) -> dict[str, Union[float, int]]:
        return {
            "a": self.model.a,
            "b": self.model.b,
            "c": self.model.c,
            "d": self.model.d,
            "inliers": self.inliers,
            "iterations": self.iterations,
        }


def plane_z(
    p: PlaneModel, x: Union[float, np.ndarray], y: Union[float, np.ndarray]
) -> Union[float, np.ndarray]:
    """Height of the plane above (x, y)."""
    return -(p.a * np.asarray(x) + p.b * np.asarray(y) + p.d) / p.c


class PlaneBaseline:
    """RANSAC plane fit with least-squares refinement on the final inliers.

    Hypotheses come from a PCG64 generator seeded by the config, so a seed
    reproduces the same model on every platform.
    """

    def __init__(self, cfg: RansacConfig):
        self.cfg = cfg

    def _hypotheses(self, xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.Generator(np.random.PCG64(self.cfg.seed))
        triples = rng.integers(0, xyz.shape[0], size=(self.cfg.iterations, 3))
        p0, p1, p2 = xyz[triples[:, 0]], xyz[triples[:, 1]], xyz[triples[:, 2]]
        normals = np.cross(p1 - p0, p2 - p0)
        lengths = np.linalg.norm(normals, axis=1)
        good = lengths / 2 >= MIN_TRIANGLE_AREA
        # vertical planes cannot be ground
        good &= np.abs(normals[:, 2]) > 0
        skipped = int((~good).sum())
        if skipped:
            logger.debug("Skipped %d degenerate RANSAC samples", skipped)
        normals = normals[good] / lengths[good, None]
        normals *= np.where(normals[:, 2] < 0, -1.0, 1.0)[:, None]
        offsets = -np.einsum("ij,ij->i", normals, p0[good])
        return normals, offsets

    def _count_inliers(
        self, xyz: np.ndarray, normals: np.ndarray, offsets: np.ndarray
    ) -> np.ndarray:
        counts = np.empty(normals.shape[0], dtype=np.int64)
        threshold = self.cfg.inlier_threshold
        for start in range(0, normals.shape[0], _BATCH):
            stop = start + _BATCH
            dist = xyz @ normals[start:stop].T + offsets[start:stop]
            counts[start:stop] = np.count_nonzero(np.abs(dist) <= threshold, axis=0)
        return counts

    @staticmethod
    def _refine(xyz: np.ndarray) -> PlaneModel:
        """Least-squares z = p*x + q*y + r via normal equations on centered points."""
        centroid = xyz.mean(axis=0)
        centered = xyz - centroid
        dx, dy, dz = centered[:, 0], centered[:, 1], centered[:, 2]
        lhs = np.array([[dx @ dx, dx @ dy], [dx @ dy, dy @ dy]])
        rhs = np.array([dx @ dz, dy @ dz])
        try:
            p, q = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as err:
            raise AlgorithmError("Inliers are collinear; cannot refine plane") from err
        normal = np.array([-p, -q, 1.0])
        return PlaneModel.from_normal(normal, -float(normal @ centroid))

    def fit_plane_ransac(self, cloud: PointCloud) -> PlaneFit:
        """Fit the ground plane maximizing inliers; first best hypothesis wins ties.

        Raises:
            InputValidationError: With fewer than 3 points
            AlgorithmError: If every sampled triple is degenerate
        """
        if len(cloud) < 3:
            raise InputValidationError(
                f"RANSAC needs at least 3 points, got {len(cloud)}"
            )
        xyz = cloud.xyz
        normals, offsets = self._hypotheses(xyz)
        if normals.shape[0] == 0:
            raise AlgorithmError(
                f"All {self.cfg.iterations} RANSAC samples were degenerate "
                "(collinear points)"
            )
        counts = self._count_inliers(xyz, normals, offsets)
        best = int(np.argmax(counts))
        best_count = int(counts[best])
        model = PlaneModel.from_normal(normals[best], float(offsets[best]))

        inliers = np.abs(model.signed_distance(xyz)) <= self.cfg.inlier_threshold
        try:
            refined = self._refine(xyz[inliers])
        except AlgorithmError as err:
            logger.warning("Keeping unrefined RANSAC plane: %s", err)
        else:
            residual = np.abs(refined.signed_distance(xyz))
            refined_count = int(
                np.count_nonzero(residual <= self.cfg.inlier_threshold)
            )
            # never report fewer inliers than the best sampled hypothesis
            if refined_count >= best_count:
                model, best_count = refined, refined_count
        logger.debug("RANSAC plane %s with %d inliers", model, best_count)
        return PlaneFit(model, best_count, int(normals.shape[0]))

    @staticmethod
    def classify_points_plane(
        cloud: PointCloud, p: PlaneModel, tolerance: float
    ) -> GroundLabels:
        ground_z = np.asarray(plane_z(p, cloud.x, cloud.y))
        everywhere = np.ones(len(cloud), dtype=bool)
        labels = classify_against(cloud.z, ground_z, everywhere, tolerance)
        return GroundLabels(labels, tolerance)
