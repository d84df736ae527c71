"""Tests for frame, label and grid file formats."""

import json
import math

import numpy as np
import pytest

from ground_aware.core import (
    Box3D,
    CountGrid,
    GridSpec,
    GroundSurface,
    HeightMap,
    InputValidationError,
)
from ground_aware.utils.formats import (
    GridFormatError,
    atomic_write,
    merge_clouds,
    read_channels,
    read_count_grid,
    read_ground_labels,
    read_grid,
    read_kitti_bin,
    read_labels_json,
    write_boxes_jsonl,
    write_channels,
    write_count_grid,
    write_grid,
    write_ground_labels,
    write_kitti_bin,
    write_labels_json,
    write_pgm,
)


@pytest.fixture
def spec():
    return GridSpec(x_min=-1.0, y_min=-2.0, cell_size=0.5, rows=3, cols=5)


def test_kitti_bin_preserves_float32_values(tmp_path, make_cloud):
    """Values representable in float32 survive a write and read unchanged."""
    cloud = make_cloud([(1.5, -2.25, 0.125), (10.0, 20.0, -1.75)])
    cloud.intensity[:] = [0.5, 0.25]
    path = tmp_path / "frame.bin"
    write_kitti_bin(path, cloud)
    assert path.stat().st_size == 32

    loaded = read_kitti_bin(path)
    np.testing.assert_array_equal(loaded.xyz, cloud.xyz)
    np.testing.assert_array_equal(loaded.intensity, cloud.intensity)
    assert loaded.source_id == "frame"


def test_kitti_bin_truncated(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(np.zeros(8, dtype="<f4").tobytes() + b"\x00\x00\x00")
    with pytest.raises(InputValidationError, match="byte offset 32"):
        read_kitti_bin(path)


def test_kitti_bin_non_finite(tmp_path):
    """The error names the byte offset of the first NaN or inf."""
    values = np.zeros(8, dtype="<f4")
    values[6] = np.nan
    path = tmp_path / "nan.bin"
    path.write_bytes(values.tobytes())
    with pytest.raises(InputValidationError, match="byte offset 24"):
        read_kitti_bin(path)


def test_merge_clouds(make_cloud):
    a, b = make_cloud([(0, 0, 0)]), make_cloud([(1, 1, 1), (2, 2, 2)])
    a.source_id, b.source_id = "front", "rear"
    merged = merge_clouds([a, b])
    assert len(merged) == 3
    assert merged.source_id == "front+rear"


def test_labels_json(tmp_path):
    """Labels keep their class name and yaw."""
    boxes = [
        Box3D(1, 2, -1, 3.9, 1.6, 1.56, 0.3, "Car"),
        Box3D(5, 5, -1, 0.8, 0.6, 1.7, -1.0, "Pedestrian"),
    ]
    path = tmp_path / "labels.json"
    write_labels_json(path, boxes)
    assert json.loads(path.read_text())[1]["class"] == "Pedestrian"
    assert read_labels_json(path) == boxes


def test_labels_json_normalizes_theta(tmp_path, caplog):
    path = tmp_path / "labels.json"
    record = {"x": 0, "y": 0, "z": 0, "l": 1, "w": 1, "h": 1, "class": "Car"}
    record["theta"] = 2 * math.pi + 0.5
    path.write_text(json.dumps([record]))
    boxes = read_labels_json(path)
    assert boxes[0].theta == pytest.approx(0.5)
    assert "normalized" in caplog.text


@pytest.mark.parametrize(
    "content,message",
    [
        ("{not json", "invalid JSON"),
        ('{"x": 1}', "JSON array"),
        (
            '[{"x": 0, "y": 0, "z": 0, "l": -1, "w": 1, "h": 1, "theta": 0, "class": "Car"}]',
            "label 0",
        ),
    ],
)
def test_labels_json_errors(tmp_path, content, message):
    path = tmp_path / "labels.json"
    path.write_text(content)
    with pytest.raises(InputValidationError, match=message):
        read_labels_json(path)


def test_boxes_jsonl(tmp_path):
    path = tmp_path / "anchors.jsonl"
    boxes = np.array([[0, 0, -1, 3.9, 1.6, 1.56, 0.0], [1, 1, -1, 3.9, 1.6, 1.56, 1.0]])
    write_boxes_jsonl(
        path,
        boxes,
        scores=np.array([0.9, 0.1]),
        extra={"kept": np.array([True, False])},
    )
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == 2
    assert lines[0]["score"] == 0.9
    assert lines[1]["kept"] is False
    assert lines[1]["theta"] == 1.0


def test_ground_labels(tmp_path):
    path = tmp_path / "ground.txt"
    labels = np.array([True, False, True])
    write_ground_labels(path, labels)
    assert path.read_text() == "1\n0\n1\n"
    np.testing.assert_array_equal(read_ground_labels(path), labels)

    path.write_text("1\n2\n")
    with pytest.raises(InputValidationError):
        read_ground_labels(path)


def test_grid_file_keeps_mask_and_values(tmp_path, spec):
    """Valid cells round through float32; invalid cells take the kind's fill."""
    values = np.arange(15, dtype=np.float64).reshape(3, 5) / 4
    valid = values > 1
    path = tmp_path / "surface.gagr"
    write_grid(path, GroundSurface(spec, values, valid))

    gs = read_grid(path)
    assert isinstance(gs, GroundSurface)
    assert gs.spec == spec
    np.testing.assert_array_equal(gs.valid, valid)
    np.testing.assert_array_equal(gs.ground_z[valid], values[valid])
    assert np.isnan(gs.ground_z[~valid]).all()

    hm = read_grid(path, HeightMap)
    assert (hm.max_z[~valid] == -np.inf).all()


def test_grid_file_errors(tmp_path, spec):
    path = tmp_path / "surface.gagr"
    valid = np.ones(spec.shape, dtype=bool)
    write_grid(path, GroundSurface(spec, np.zeros(spec.shape), valid))
    data = path.read_bytes()

    (tmp_path / "magic.gagr").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(GridFormatError, match="bad magic"):
        read_grid(tmp_path / "magic.gagr")

    (tmp_path / "short.gagr").write_bytes(data[:-3])
    with pytest.raises(GridFormatError, match="truncated"):
        read_grid(tmp_path / "short.gagr")

    (tmp_path / "long.gagr").write_bytes(data + b"\x00")
    with pytest.raises(GridFormatError, match="dimension mismatch"):
        read_grid(tmp_path / "long.gagr")

    (tmp_path / "tiny.gagr").write_bytes(data[:10])
    with pytest.raises(GridFormatError, match="header"):
        read_grid(tmp_path / "tiny.gagr")


def test_count_grid_file(tmp_path, spec):
    counts = np.arange(15).reshape(3, 5)
    path = tmp_path / "counts.gagr"
    write_count_grid(path, CountGrid(spec, counts))
    loaded = read_count_grid(path)
    np.testing.assert_array_equal(loaded.counts, counts)


def test_channel_file(tmp_path, spec):
    channels = np.random.default_rng(0).uniform(size=(6, 3, 5))
    valid = np.ones(spec.shape, dtype=bool)
    valid[0, 0] = False
    path = tmp_path / "features.gagr"
    write_channels(path, spec, channels, valid)

    loaded_spec, loaded, loaded_valid = read_channels(path)
    assert loaded_spec == spec
    np.testing.assert_allclose(loaded, channels, atol=1e-7)
    np.testing.assert_array_equal(loaded_valid, valid)


def test_pgm(tmp_path):
    """Valid cells map onto 1..255 and invalid cells to 0."""
    values = np.array([[0.0, 1.0], [2.0, 5.0]])
    valid = np.array([[True, True], [True, False]])
    path = tmp_path / "surface.pgm"
    write_pgm(path, values, valid)
    data = path.read_bytes()
    header = b"P5\n2 2\n255\n"
    assert data.startswith(header)
    assert list(data[len(header):]) == [1, 128, 255, 0]


def test_atomic_write_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.bin"
    with pytest.raises(RuntimeError):
        with atomic_write(target) as f:
            f.write(b"partial")
            raise RuntimeError("boom")
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []
