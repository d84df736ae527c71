"""Test fixtures and configuration for ground-aware tests."""

import numpy as np
import pytest

from ground_aware.config import RoiConfig
from ground_aware.core import GridSpec, HeightMap, PointCloud
from ground_aware.synth import TerrainSpec, generate_scene, scatter_objects
from ground_aware.utils.formats import write_kitti_bin, write_labels_json


def _cloud(points):
    return PointCloud.from_array(np.asarray(points, dtype=np.float64).reshape(-1, 3))


def _height_map(values):
    values = np.asarray(values, dtype=np.float64)
    spec = GridSpec(
        x_min=0.0, y_min=0.0, cell_size=0.1, rows=values.shape[0], cols=values.shape[1]
    )
    valid = np.isfinite(values)
    return HeightMap(spec, np.where(valid, values, -np.inf), valid)


@pytest.fixture
def make_cloud():
    """Build a cloud from a list of (x, y, z) tuples."""
    return _cloud


@pytest.fixture
def make_height_map():
    """Height map on a 0.1 m grid at the origin; NaN marks an empty cell."""
    return _height_map


@pytest.fixture
def small_roi():
    """A 20 m x 12 m region, 200 x 120 cells at 0.1 m."""
    return RoiConfig(x_min=-10, x_max=10, y_min=-6, y_max=6)


@pytest.fixture
def small_spec(small_roi):
    return GridSpec.from_roi(small_roi, 0.1)


@pytest.fixture
def flat_scene():
    """Default-ROI flat ground at -1.73 m with ten parked cars."""
    terrain = TerrainSpec(kind="flat", point_density=10.0, seed=7)
    return generate_scene(terrain, scatter_objects(terrain, 10))


@pytest.fixture
def terrace_scene():
    """Default-ROI ground with a band raised 0.5 m for -15 <= x < 15."""
    return generate_scene(TerrainSpec(kind="terrace", point_density=10.0, seed=3))


@pytest.fixture
def small_frame(tmp_path, small_roi):
    """A small flat frame with two cars written as .bin plus labels JSON."""
    terrain = TerrainSpec(kind="flat", point_density=20.0, seed=11)
    boxes = scatter_objects(terrain, 2, small_roi)
    scene = generate_scene(terrain, boxes, small_roi)
    frame = tmp_path / "frame.bin"
    labels = tmp_path / "frame.json"
    write_kitti_bin(frame, scene.cloud)
    write_labels_json(labels, scene.boxes)
    return frame, labels, scene
