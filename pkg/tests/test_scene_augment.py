"""Tests for scene flips, rotations and ground-aware object transplants."""

import math

import numpy as np
import pytest

from ground_aware.config import AugmentConfig, FilterConfig
from ground_aware.core import Box3D, CountGrid, GroundSurface, PointCloud
from ground_aware.geometry import iou_bev, points_in_box
from ground_aware.operations.bev_grid import build_height_map, crop_roi, integral
from ground_aware.operations.ground_surface import GroundEstimator
from ground_aware.operations.scene_augment import (
    Donor,
    Scene,
    SceneAugmenter,
    extract_donors,
    flip_scene,
    is_relatively_empty,
    rotate_scene,
)
from ground_aware.synth import TerrainSpec, generate_scene, scatter_objects


@pytest.fixture
def donors(small_roi):
    """Two cars cut from a frame whose ground sits at -1.0 m."""
    terrain = TerrainSpec(
        kind="flat", z0=-1.0, noise_sigma=0.0, point_density=20.0, seed=21
    )
    source = generate_scene(terrain, scatter_objects(terrain, 2, small_roi), small_roi)
    return extract_donors(source.cloud, source.boxes)


@pytest.fixture
def target(small_roi):
    terrain = TerrainSpec(kind="flat", noise_sigma=0.0, point_density=20.0, seed=5)
    car = terrain.rest_on_ground(Box3D(0.0, 0.0, 0.0, 3.9, 1.6, 1.56, 0.3))
    scene = generate_scene(terrain, [car], small_roi)
    return Scene(scene.cloud, scene.boxes)


def empty_obstacles(spec):
    return integral(CountGrid(spec, np.zeros(spec.shape)))


def flat_ground(spec):
    valid = np.ones(spec.shape, dtype=bool)
    return GroundSurface(spec, np.full(spec.shape, -1.73), valid)


def angle_gap(a, b):
    return math.remainder(a - b, 2 * math.pi)


def test_flip_twice_is_identity(flat_scene):
    cloud, boxes = flip_scene(*flip_scene(flat_scene.cloud, flat_scene.boxes))
    np.testing.assert_array_equal(cloud.xyz, flat_scene.cloud.xyz)
    for got, want in zip(boxes, flat_scene.boxes):
        assert (got.x, got.y, got.z) == (want.x, want.y, want.z)
        assert angle_gap(got.theta, want.theta) == pytest.approx(0, abs=1e-12)


def test_flip_mirrors_y_and_yaw():
    box = Box3D(1.0, 2.0, -1.0, 3.9, 1.6, 1.56, 0.5)
    _, (flipped,) = flip_scene(PointCloud.empty(), [box])
    assert (flipped.x, flipped.y) == (1.0, -2.0)
    assert flipped.theta == pytest.approx(-0.5)


def test_flipped_scene_has_mirrored_surface(flat_scene, small_roi, small_spec):
    """The ROI is symmetric in y, so flipping mirrors the surface columns."""
    cloud = crop_roi(flat_scene.cloud, small_roi)
    flipped, _ = flip_scene(cloud, [])
    estimator = GroundEstimator(FilterConfig())
    gs = estimator.estimate_surface(build_height_map(cloud, small_spec))
    mirrored = estimator.estimate_surface(build_height_map(flipped, small_spec))

    np.testing.assert_array_equal(mirrored.valid, gs.valid[:, ::-1])
    np.testing.assert_array_equal(mirrored.ground_z, gs.ground_z[:, ::-1])


@pytest.mark.parametrize("alpha", [math.pi / 4, -0.3, math.pi / 2])
def test_rotation_inverts_and_preserves_geometry(flat_scene, alpha):
    cloud, boxes = rotate_scene(flat_scene.cloud, flat_scene.boxes, alpha)
    back, back_boxes = rotate_scene(cloud, boxes, -alpha)
    np.testing.assert_allclose(back.xyz, flat_scene.cloud.xyz, atol=1e-9)
    for got, want in zip(back_boxes, flat_scene.boxes):
        assert (got.x, got.y) == pytest.approx((want.x, want.y), abs=1e-9)
        assert angle_gap(got.theta, want.theta) == pytest.approx(0, abs=1e-9)

    # distances from the origin and point-in-box membership survive
    original = flat_scene.cloud
    np.testing.assert_allclose(
        np.hypot(cloud.x, cloud.y), np.hypot(original.x, original.y), atol=1e-9
    )
    for before, after in zip(flat_scene.boxes, boxes):
        moved = points_in_box(cloud, after).sum()
        assert moved == points_in_box(original, before).sum()


def test_relatively_empty():
    boxes = [Box3D(0, 0, 0, 1, 1, 1)] * 3
    assert is_relatively_empty(boxes, None)
    assert is_relatively_empty(boxes, 3)
    assert not is_relatively_empty(boxes, 2)


def test_extract_donors_skips_empty_boxes(make_cloud):
    cloud = make_cloud([(0, 0, 0), (0.2, 0, 0.1), (10, 10, 0)])
    boxes = [Box3D(0, 0, 0, 1, 1, 1), Box3D(-20, 0, 0, 1, 1, 1)]
    (donor,) = extract_donors(cloud, boxes)
    assert len(donor.points) == 2
    assert donor.box == boxes[0]


def test_free_cells_on_empty_ground(small_spec):
    """Every valid interior cell is free; cells whose window leaves the grid are not."""
    augmenter = SceneAugmenter(AugmentConfig())
    cells = augmenter.find_free_cells(
        flat_ground(small_spec), empty_obstacles(small_spec), [], (3.9, 1.6)
    )
    free = np.zeros(small_spec.shape, dtype=bool)
    free[cells[:, 0], cells[:, 1]] = True
    assert free[100, 60]
    assert not free[0, 0]
    assert not free[10, 60]
    assert free[30, 20]
    # half extents 2.45 m x 1.3 m keep roughly 25 rows and 13 columns off each border
    assert 140 * 90 <= free.sum() <= 152 * 96


def test_boxes_and_obstacles_block_cells(small_spec):
    augmenter = SceneAugmenter(AugmentConfig())
    counts = np.zeros(small_spec.shape)
    counts[150, 60] = 1
    box = Box3D(-5.0, 0.0, -0.95, 3.9, 1.6, 1.56, 0.3)
    cells = augmenter.find_free_cells(
        flat_ground(small_spec),
        integral(CountGrid(small_spec, counts)),
        [box],
        (3.9, 1.6),
    )
    free = np.zeros(small_spec.shape, dtype=bool)
    free[cells[:, 0], cells[:, 1]] = True
    i, j = small_spec.cell_indices(np.array(-5.0), np.array(0.0))
    assert not free[int(i), int(j)]
    assert not free[150, 60]
    assert free[100, 60]

    footprints = augmenter.footprint_boxes(
        np.stack(small_spec.cell_center(cells[:, 0], cells[:, 1]), axis=1), (3.9, 1.6)
    )
    step = max(1, len(footprints) // 500)
    assert all(iou_bev(fp, box) == 0.0 for fp in footprints[::step])


def test_invalid_ground_is_never_free(small_spec):
    valid = np.ones(small_spec.shape, dtype=bool)
    valid[:, :60] = False
    gs = GroundSurface(small_spec, np.where(valid, -1.73, np.nan), valid)
    cells = SceneAugmenter(AugmentConfig()).find_free_cells(
        gs, empty_obstacles(small_spec), [], (3.9, 1.6)
    )
    assert (cells[:, 1] >= 60).all()


def test_augment_rests_donors_on_local_ground(target, donors, small_roi, small_spec):
    """Donors from -1.0 m ground land on this frame's -1.73 m ground without overlap."""
    augmenter = SceneAugmenter(AugmentConfig(), seed=4)
    result = augmenter.augment_scene(
        target, donors, GroundEstimator(FilterConfig()), small_roi, small_spec, 0.2
    )
    assert result.complete
    assert len(result.placed) == 2
    assert len(result.scene.boxes) == len(target.boxes) + 2
    added = sum(len(d.points) for d in donors)
    assert len(result.scene.cloud) == len(target.cloud) + added

    for donor, box in zip(donors, result.placed):
        moved = points_in_box(result.scene.cloud, box)
        assert moved.sum() >= len(donor.points)
        assert result.scene.cloud.z[moved].min() == pytest.approx(-1.73, abs=0.02)
        assert box.bottom == pytest.approx(-1.73, abs=0.02)
        assert iou_bev(box, target.boxes[0]) == 0.0
    assert iou_bev(result.placed[0], result.placed[1]) == 0.0


def test_augment_is_deterministic(target, donors, small_roi, small_spec):
    def run():
        return SceneAugmenter(AugmentConfig(), seed=9).augment_scene(
            target, donors, GroundEstimator(FilterConfig()), small_roi, small_spec, 0.2
        )

    first, second = run(), run()
    assert first.placed == second.placed
    np.testing.assert_array_equal(first.scene.cloud.xyz, second.scene.cloud.xyz)


def test_augment_respects_object_limit(target, donors, small_roi, small_spec):
    augmenter = SceneAugmenter(AugmentConfig(max_existing_objects=0))
    estimator = GroundEstimator(FilterConfig())
    result = augmenter.augment_scene(
        target, donors, estimator, small_roi, small_spec, 0.2, flip=True
    )
    assert result.placed == []
    assert result.unplaced == [0, 1]
    assert result.scene.boxes[0].y == -target.boxes[0].y


def test_unplaced_donors_are_reported(small_spec, make_cloud, caplog):
    """A crowded grid runs out of free cells and says which donors were left over."""
    augmenter = SceneAugmenter(AugmentConfig())
    gs = flat_ground(small_spec)
    cells = augmenter.find_free_cells(gs, empty_obstacles(small_spec), [], (3.9, 1.6))
    points = make_cloud([(0.0, 0.0, -0.5), (0.5, 0.2, 0.0)])
    donors = [Donor(points, Box3D(0.0, 0.0, -0.2, 3.9, 1.6, 1.56))] * 30

    result = augmenter.transplant_objects(Scene(make_cloud([])), gs, donors, cells)
    assert not result.complete
    assert len(result.placed) + len(result.unplaced) == 30
    assert result.unplaced == sorted(result.unplaced)
    assert len(result.scene.cloud) == 2 * len(result.placed)
    assert "No free cell left" in caplog.text
    for a in range(len(result.placed)):
        for b in range(a + 1, len(result.placed)):
            assert iou_bev(result.placed[a], result.placed[b]) == 0.0
