"""Tests for core domain types."""

import math

import numpy as np
import pytest

from ground_aware.config import RoiConfig
from ground_aware.core import (
    Box3D,
    GridSpec,
    GroundSurface,
    HeightMap,
    InputValidationError,
    PointCloud,
    boxes_to_array,
    cells_for,
    normalize_angle,
)


def test_normalize_angle_wraps_into_half_open_range():
    """Angles land in [-pi, pi); pi itself maps to -pi."""
    assert normalize_angle(math.pi) == pytest.approx(-math.pi)
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert normalize_angle(0.25) == pytest.approx(0.25)
    wrapped = normalize_angle(np.array([0.0, 2 * math.pi, -3 * math.pi]))
    assert isinstance(wrapped, np.ndarray)
    assert np.all(wrapped >= -math.pi) and np.all(wrapped < math.pi)


def test_cells_for_ignores_float_noise():
    assert cells_for(1.5, 0.1) == 15
    assert cells_for(1.55, 0.1) == 16
    assert cells_for(100.0, 0.1) == 1000


def test_box_validation():
    """Boxes reject non-positive sizes, non-finite values and unwrapped yaw."""
    with pytest.raises(InputValidationError, match="positive"):
        Box3D(0, 0, 0, 0.0, 1, 1)
    with pytest.raises(InputValidationError, match="non-finite"):
        Box3D(math.nan, 0, 0, 1, 1, 1)
    with pytest.raises(InputValidationError, match="theta"):
        Box3D(0, 0, 0, 1, 1, 1, math.pi)


def test_box_from_array_normalizes_theta():
    box = Box3D.from_array([1, 2, 3, 4, 2, 1.5, 2 * math.pi + 0.5])
    assert box.theta == pytest.approx(0.5)
    assert box.bottom == pytest.approx(2.25)
    assert box.top == pytest.approx(3.75)
    assert box.diagonal == pytest.approx(math.hypot(4, 2))
    assert boxes_to_array([box]).shape == (1, 7)
    assert boxes_to_array([]).shape == (0, 7)


def test_point_cloud_from_array():
    """Clouds accept (N, 3) and (N, 4) arrays; intensity defaults to zero."""
    cloud = PointCloud.from_array(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    assert len(cloud) == 2
    np.testing.assert_array_equal(cloud.intensity, [0.0, 0.0])
    np.testing.assert_array_equal(cloud.as_array()[:, :3], cloud.xyz)

    with pytest.raises(InputValidationError):
        PointCloud.from_array(np.zeros((3, 5)))
    with pytest.raises(InputValidationError, match="Intensity length"):
        PointCloud(np.zeros((3, 3)), np.zeros(2))


def test_point_cloud_shift_subset_concat():
    cloud = PointCloud(np.arange(9.0).reshape(3, 3), np.array([0.1, 0.2, 0.3]), "a")
    moved = cloud.shifted(dz=1.0)
    np.testing.assert_array_equal(moved.z, cloud.z + 1.0)
    np.testing.assert_array_equal(cloud.z, [2.0, 5.0, 8.0])

    picked = cloud.subset(np.array([True, False, True]))
    np.testing.assert_array_equal(picked.intensity, [0.1, 0.3])

    joined = PointCloud.concat([cloud, picked])
    assert len(joined) == 5
    assert joined.source_id == "a"
    assert len(PointCloud.concat([])) == 0


def test_grid_spec_defaults():
    """The default ROI at 0.1 m cells is a 1000 x 600 grid."""
    spec = GridSpec.from_roi(RoiConfig(), 0.1)
    assert spec.shape == (1000, 600)
    assert spec.x_max == pytest.approx(50.0)
    assert spec.y_max == pytest.approx(30.0)


def test_grid_spec_indices_follow_floor_rule():
    spec = GridSpec(x_min=-1.0, y_min=-1.0, cell_size=0.5, rows=4, cols=4)
    i, j = spec.cell_indices(np.array([-1.0, -0.51, 0.99]), np.array([0.0, 0.5, -1.0]))
    np.testing.assert_array_equal(i, [0, 0, 3])
    np.testing.assert_array_equal(j, [2, 3, 0])
    assert not spec.contains(np.array([4]), np.array([0]))[0]
    cx, cy = spec.cell_center(0, 3)
    assert (cx, cy) == pytest.approx((-0.75, 0.75))


def test_grid_spec_rejects_empty_grid():
    with pytest.raises(InputValidationError):
        GridSpec(x_min=0, y_min=0, cell_size=0.1, rows=0, cols=5)


def test_grid_fill_values():
    """Height maps fill invalid cells with -inf, ground surfaces with NaN."""
    spec = GridSpec(x_min=0, y_min=0, cell_size=1.0, rows=1, cols=2)
    base = GroundSurface(spec, np.array([[1.0, 2.0]]), np.array([[True, False]]))
    hm = HeightMap.from_grid(base)
    assert hm.max_z[0, 1] == -np.inf
    gs = GroundSurface.from_grid(hm)
    assert math.isnan(gs.ground_z[0, 1])
    assert gs.shifted(0.5).ground_z[0, 0] == pytest.approx(1.5)

    with pytest.raises(InputValidationError, match="do not match"):
        GroundSurface(spec, np.zeros((2, 2)), np.ones((2, 2), dtype=bool))
