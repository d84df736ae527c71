"""Ground-relative BEV height slices plus a point-density channel."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ground_aware.config import FeatureConfig
from ground_aware.core import GridSpec, GroundSurface, PointCloud
from ground_aware.operations.bev_grid import bin_points

logger = logging.getLogger(__name__)

DENSITY_SATURATION = 63
DENSITY_NORM = math.log(DENSITY_SATURATION + 1)
# Relative heights are snapped to 1 µm, which absorbs the rounding of a common
# vertical offset applied to both cloud and surface. A height lying within
# rounding of a quantum midpoint can still snap to the neighbouring quantum,
# so offset invariance holds to 1 µm rather than bit for bit. Point order
# never matters: each height is computed per point and merged with max.
HEIGHT_QUANTUM = 1e-6


@dataclass
class BevFeatures:
    """M slice channels and one density channel, all in [0, 1]."""

    spec: GridSpec
    slices: np.ndarray
    density: np.ndarray

    @property
    def num_slices(self) -> int:
        return int(self.slices.shape[0])

    def stack(self) -> np.ndarray:
        """All channels as (M + 1, rows, cols), density last."""
        return np.concatenate([self.slices, self.density[None]], axis=0)

    def channel_names(self) -> list[str]:
        """Channel names in :meth:`stack` order, density last."""
        return [f"slice{s}" for s in range(self.num_slices)] + ["density"]


class FeatureExtractor:
    """Builds slice features relative to the local ground surface."""

    def __init__(self, cfg: FeatureConfig):
        self.cfg = cfg

    def extract_features(self, cloud: PointCloud, gs: GroundSurface) -> BevFeatures:
        spec = gs.spec
        m = self.cfg.num_slices
        slices = np.zeros((m, *spec.shape))
        counts = np.zeros(spec.shape, dtype=np.int64)

        i, j = bin_points(cloud, spec)
        on_ground = gs.valid[i, j]
        i, j = i[on_ground], j[on_ground]
        z_rel = cloud.z[on_ground] - gs.ground_z[i, j]
        z_rel = np.rint(z_rel / HEIGHT_QUANTUM) * HEIGHT_QUANTUM

        np.add.at(counts, (i, j), 1)

        lo, hi = self.cfg.slice_min, self.cfg.slice_max
        width = (hi - lo) / m
        inside = (z_rel >= lo) & (z_rel < hi)
        rel = z_rel[inside] - lo
        s = np.minimum((rel / width).astype(np.int64), m - 1)
        value = (rel - s * width) / width
        np.maximum.at(slices, (s, i[inside], j[inside]), np.clip(value, 0.0, 1.0))

        # ln(1 + n) / ln 64 reaches 1 at n = 63; pin it so rounding cannot miss
        density = np.where(
            counts >= DENSITY_SATURATION, 1.0, np.log1p(counts) / DENSITY_NORM
        )
        logger.debug(
            "Features: %d points on valid ground, %d inside slices",
            int(on_ground.sum()),
            int(inside.sum()),
        )
        return BevFeatures(spec, slices, density)
