"""Timing and accuracy harness: local ground surface against a single plane."""

import logging
import math
import platform
import sys
import time
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
import scipy
from pydantic import BaseModel, Field
from threadpoolctl import threadpool_info, threadpool_limits

from ground_aware.config import FilterConfig, RansacConfig, RoiConfig
from ground_aware.core import GridSpec, GroundSurface, PointCloud
from ground_aware.geometry import Difficulty, range_masks
from ground_aware.operations.bev_grid import build_height_map, crop_roi
from ground_aware.operations.ground_surface import GroundEstimator
from ground_aware.operations.plane_baseline import PlaneBaseline, PlaneModel, plane_z
from ground_aware.synth import TerrainSpec, generate_scene

logger = logging.getLogger(__name__)

MIN_REPORTED_REPETITIONS = 30
# BLAS and OpenMP pools are capped while timing
BENCH_THREADS = 1


class BenchReport(BaseModel):
    """Wall-clock statistics for one method, in milliseconds per frame."""

    method: str
    median_ms: float
    p95_ms: float
    repetitions: int = Field(ge=1)
    points: int = Field(ge=0)

    @property
    def reportable(self) -> bool:
        return self.repetitions >= MIN_REPORTED_REPETITIONS


class GroundBench(BaseModel):
    surface: BenchReport
    plane: BenchReport
    speedup: float


class ScalingPoint(BaseModel):
    points: int
    surface_ms: float
    plane_ms: float


class RangeAccuracy(BaseModel):
    surface_rms: float
    plane_rms: float
    cells: int


class AccuracyReport(BaseModel):
    """Errors against the true terrain over the evaluated cells.

    ``by_range`` splits the same cells by BEV distance from the sensor:
    easy up to 20 m, hard from 20 m to 50 m.
    """

    surface_rms: float
    surface_max: float
    plane_rms: float
    plane_max: float
    cells: int
    by_range: dict[Difficulty, RangeAccuracy] = Field(default_factory=dict)


class ClassificationReport(BaseModel):
    recall: float
    precision: float
    misclassified: int


def time_call(fn: Callable[[], Any], repetitions: int, warmup: int) -> np.ndarray:
    """Per-call wall time in milliseconds; warm-up calls are discarded.

    Native thread pools are limited to ``BENCH_THREADS`` for the warm-up and
    the timed calls.
    """
    samples = np.empty(repetitions)
    with threadpool_limits(limits=BENCH_THREADS):
        for _ in range(warmup):
            fn()
        for k in range(repetitions):
            start = time.perf_counter()
            fn()
            samples[k] = (time.perf_counter() - start) * 1e3
    return samples


def _report(method: str, samples: np.ndarray, points: int) -> BenchReport:
    return BenchReport(
        method=method,
        median_ms=float(np.median(samples)),
        p95_ms=float(np.percentile(samples, 95)),
        repetitions=int(samples.shape[0]),
        points=points,
    )


def bench_ground(
    cloud: PointCloud,
    spec: GridSpec,
    filter_cfg: FilterConfig,
    ransac_cfg: RansacConfig,
    repetitions: int,
    warmup: int = 5,
) -> GroundBench:
    """Time height map + min filter against RANSAC on the same cloud.

    ``cloud`` must already lie inside the grid.
    """
    estimator = GroundEstimator(filter_cfg)
    baseline = PlaneBaseline(ransac_cfg)

    def surface() -> GroundSurface:
        return estimator.estimate_surface(build_height_map(cloud, spec))

    surface_ms = time_call(surface, repetitions, warmup)
    plane_ms = time_call(lambda: baseline.fit_plane_ransac(cloud), repetitions, warmup)
    surface_report = _report("surface", surface_ms, len(cloud))
    plane_report = _report("ransac", plane_ms, len(cloud))
    speedup = plane_report.median_ms / surface_report.median_ms
    if not surface_report.reportable:
        logger.warning(
            "Only %d repetitions; at least %d are needed for reportable numbers",
            repetitions,
            MIN_REPORTED_REPETITIONS,
        )
    logger.info(
        "surface %.2f ms, ransac %.2f ms, speedup %.1fx",
        surface_report.median_ms,
        plane_report.median_ms,
        speedup,
    )
    return GroundBench(surface=surface_report, plane=plane_report, speedup=speedup)


def bench_scaling(
    terrain: TerrainSpec,
    roi: RoiConfig,
    cell_size: float,
    filter_cfg: FilterConfig,
    ransac_cfg: RansacConfig,
    sizes: Sequence[int],
    repetitions: int,
    warmup: int = 2,
) -> list[ScalingPoint]:
    """Median timings for clouds of each size over the same ROI."""
    spec = GridSpec.from_roi(roi, cell_size)
    area = (roi.x_max - roi.x_min) * (roi.y_max - roi.y_min)
    curve = []
    for size in sizes:
        sized = terrain.model_copy(update={"point_density": size / area, "ring": None})
        scene = generate_scene(sized, roi=roi)
        cloud = crop_roi(scene.cloud, roi)
        result = bench_ground(cloud, spec, filter_cfg, ransac_cfg, repetitions, warmup)
        curve.append(
            ScalingPoint(
                points=len(cloud),
                surface_ms=result.surface.median_ms,
                plane_ms=result.plane.median_ms,
            )
        )
    return curve


def evaluation_mask(gs: GroundSurface, terrain: TerrainSpec, band: float) -> np.ndarray:
    """Valid cells whose center is farther than ``band`` from every terrain edge."""
    spec = gs.spec
    ii = np.arange(spec.rows)
    cx, _ = spec.cell_center(ii, 0)
    keep_rows = np.ones(spec.rows, dtype=bool)
    for edge in terrain.edges():
        keep_rows &= np.abs(cx - edge) > band
    return gs.valid & keep_rows[:, None]


def accuracy_report(
    gs: GroundSurface, plane: PlaneModel, terrain: TerrainSpec, band: float = 0.0
) -> AccuracyReport:
    """RMS and max |error| of surface and plane against the terrain at cell centers.

    Cells within ``band`` of a terrain discontinuity are excluded from both.
    """
    spec = gs.spec
    mask = evaluation_mask(gs, terrain, band)
    ii, jj = np.nonzero(mask)
    cx, cy = spec.cell_center(ii, jj)
    truth = terrain.height(cx, cy)
    surface_err = gs.ground_z[ii, jj] - truth
    plane_err = np.asarray(plane_z(plane, cx, cy)) - truth

    def rms(err: np.ndarray) -> float:
        return math.sqrt(float(np.mean(err**2))) if err.size else 0.0

    def peak(err: np.ndarray) -> float:
        return float(np.abs(err).max()) if err.size else 0.0

    by_range = {
        category: RangeAccuracy(
            surface_rms=rms(surface_err[inside]),
            plane_rms=rms(plane_err[inside]),
            cells=int(inside.sum()),
        )
        for category, inside in range_masks(cx, cy).items()
    }
    return AccuracyReport(
        surface_rms=rms(surface_err),
        surface_max=peak(surface_err),
        plane_rms=rms(plane_err),
        plane_max=peak(plane_err),
        cells=int(ii.shape[0]),
        by_range=by_range,
    )


def classification_report(
    labels: np.ndarray, truth: np.ndarray
) -> ClassificationReport:
    """Recall and precision of the ground class; empty denominators give 1.0."""
    labels, truth = np.asarray(labels, dtype=bool), np.asarray(truth, dtype=bool)
    true_pos = int(np.count_nonzero(labels & truth))
    predicted, actual = int(labels.sum()), int(truth.sum())
    return ClassificationReport(
        recall=true_pos / actual if actual else 1.0,
        precision=true_pos / predicted if predicted else 1.0,
        misclassified=int(np.count_nonzero(labels != truth)),
    )


def environment_report() -> dict[str, str]:
    """Versions plus the native thread pools seen while timing."""
    with threadpool_limits(limits=BENCH_THREADS):
        pools = threadpool_info()
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "bench_threads": str(BENCH_THREADS),
        "thread_pools": ", ".join(
            f"{pool['internal_api']}={pool['num_threads']}" for pool in pools
        ),
    }
