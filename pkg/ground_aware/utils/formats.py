"""Readers and writers for sensor frames, labels and grid artifacts."""

import json
import logging
import math
import os
import struct
import tempfile
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Optional, TypeVar

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ground_aware.core import (
    Box3D,
    CountGrid,
    Grid,
    GridSpec,
    GroundSurface,
    InputValidationError,
    PointCloud,
    normalize_angle,
)

logger = logging.getLogger(__name__)

GRID_MAGIC = b"GAGR"
# magic, rows, cols, x_min, y_min, cell_size
_HEADER = struct.Struct("<4sIIddd")
_CHANNELS = struct.Struct("<I")
_POINT_BYTES = 16

GridT = TypeVar("GridT", bound=Grid)


class GridFormatError(InputValidationError):
    """Raised when a grid file is malformed or truncated."""


@contextmanager
def atomic_write(path: Path, mode: str = "wb") -> Iterator[IO[Any]]:
    """Write to a temporary file next to ``path`` and rename it into place.

    Args:
        path: Final destination
        mode: File mode for the temporary file ("wb" or "w")
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    encoding = None if "b" in mode else "utf-8"
    try:
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
        os.replace(tmp_name, path)
        logger.debug("Wrote %s", path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError as err:
            logger.warning("Failed to clean up temporary file: %s", err)
        raise


# --- KITTI velodyne frames -------------------------------------------------


def read_kitti_bin(path: Path) -> PointCloud:
    """Read a headerless KITTI ``.bin`` frame of little-endian float32 records.

    Raises:
        InputValidationError: If the file is truncated or holds non-finite values
    """
    data = Path(path).read_bytes()
    if len(data) % _POINT_BYTES:
        offset = len(data) - len(data) % _POINT_BYTES
        raise InputValidationError(
            f"{path}: truncated point record at byte offset {offset} "
            f"(file length {len(data)} is not a multiple of {_POINT_BYTES})"
        )
    values = np.frombuffer(data, dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise InputValidationError(
            f"{path}: non-finite value at byte offset {int(bad[0]) * 4}"
        )
    points = values.reshape(-1, 4).astype(np.float64)
    logger.debug("Read %d points from %s", points.shape[0], path)
    return PointCloud(points[:, :3], points[:, 3], source_id=Path(path).stem)


def write_kitti_bin(path: Path, cloud: PointCloud) -> None:
    """Write a cloud as KITTI float32 records (x, y, z, intensity)."""
    with atomic_write(Path(path)) as f:
        f.write(cloud.as_array().astype("<f4").tobytes())


def merge_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    """Concatenate frames from several sensors into a single cloud."""
    return PointCloud.concat(clouds, source_id="+".join(c.source_id for c in clouds))


# --- Labels ----------------------------------------------------------------


class LabelRecord(BaseModel):
    """One object label in the sensor frame."""

    x: float
    y: float
    z: float
    l: float = Field(gt=0)  # noqa: E741
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    theta: float
    label: str = Field(alias="class")

    model_config = {"populate_by_name": True}


def read_labels_json(path: Path) -> list[Box3D]:
    """Read sensor-frame box labels from a JSON array.

    Raises:
        InputValidationError: If the file is not a JSON array of valid labels
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise InputValidationError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(data, list):
        raise InputValidationError(f"{path}: labels file must contain a JSON array")

    boxes = []
    for index, item in enumerate(data):
        try:
            record = LabelRecord.model_validate(item)
        except ValidationError as err:
            raise InputValidationError(
                f"{path}: label {index} is invalid: {err}"
            ) from err
        theta = record.theta
        if not -math.pi <= theta < math.pi:
            theta = float(normalize_angle(theta))
            logger.warning(
                "Label %d theta %.6f outside [-pi, pi), normalized to %.6f",
                index,
                record.theta,
                theta,
            )
        boxes.append(
            Box3D(
                record.x,
                record.y,
                record.z,
                record.l,
                record.w,
                record.h,
                theta,
                record.label,
            )
        )
    return boxes


def write_labels_json(path: Path, boxes: Sequence[Box3D]) -> None:
    records = [
        {
            "x": b.x,
            "y": b.y,
            "z": b.z,
            "l": b.l,
            "w": b.w,
            "h": b.h,
            "theta": b.theta,
            "class": b.label,
        }
        for b in boxes
    ]
    with atomic_write(Path(path), "w") as f:
        json.dump(records, f, indent=2)
        f.write("\n")


def write_boxes_jsonl(
    path: Path,
    boxes: np.ndarray,
    scores: Optional[np.ndarray] = None,
    extra: Optional[dict[str, np.ndarray]] = None,
) -> None:
    """Write (N, 7) boxes as JSON lines ``{x,y,z,l,w,h,theta,score,...}``."""
    extra = extra or {}
    keys = ("x", "y", "z", "l", "w", "h", "theta")
    with atomic_write(Path(path), "w") as f:
        for index, row in enumerate(np.asarray(boxes, dtype=np.float64).reshape(-1, 7)):
            record: dict[str, Any] = {k: float(v) for k, v in zip(keys, row)}
            if scores is not None:
                record["score"] = float(scores[index])
            for name, values in extra.items():
                record[name] = values[index].item()
            f.write(json.dumps(record) + "\n")


# --- Ground labels -----------------------------------------------------------


def write_ground_labels(path: Path, labels: np.ndarray) -> None:
    """Write per-point ground flags as newline-delimited 0/1 in point order."""
    with atomic_write(Path(path), "w") as f:
        flags = np.asarray(labels, dtype=bool)
        f.writelines("1\n" if flag else "0\n" for flag in flags)


def read_ground_labels(path: Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split()
    if any(line not in ("0", "1") for line in lines):
        raise InputValidationError(f"{path}: ground labels must be 0 or 1")
    return np.array([line == "1" for line in lines], dtype=bool)


# --- Grid files --------------------------------------------------------------


def _pack_header(spec: GridSpec) -> bytes:
    return _HEADER.pack(
        GRID_MAGIC, spec.rows, spec.cols, spec.x_min, spec.y_min, spec.cell_size
    )


def _unpack_header(data: bytes, path: Path) -> tuple[GridSpec, int]:
    if len(data) < _HEADER.size:
        raise GridFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, rows, cols, x_min, y_min, cell_size = _HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise GridFormatError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
    try:
        spec = GridSpec(
            x_min=x_min, y_min=y_min, cell_size=cell_size, rows=rows, cols=cols
        )
    except InputValidationError as err:
        raise GridFormatError(f"{path}: invalid grid header: {err}") from err
    return spec, _HEADER.size


def _check_length(data: bytes, expected: int, path: Path) -> None:
    if len(data) < expected:
        raise GridFormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(data)}"
        )
    if len(data) > expected:
        raise GridFormatError(
            f"{path}: dimension mismatch, {len(data) - expected} trailing bytes"
        )


def _pack_mask(valid: np.ndarray) -> bytes:
    return np.packbits(valid.reshape(-1), bitorder="little").tobytes()


def _unpack_mask(data: bytes, offset: int, spec: GridSpec) -> np.ndarray:
    n = spec.rows * spec.cols
    bits = np.frombuffer(data, dtype=np.uint8, count=(n + 7) // 8, offset=offset)
    flags = np.unpackbits(bits, bitorder="little", count=n)
    return flags.astype(bool).reshape(spec.shape)


def write_grid(path: Path, grid: Grid) -> None:
    """Write a height map or ground surface: header, f32 cells, validity bitmap."""
    with atomic_write(Path(path)) as f:
        f.write(_pack_header(grid.spec))
        f.write(grid.values.astype("<f4").tobytes())
        f.write(_pack_mask(grid.valid))


def read_grid(
    path: Path, kind: type[GridT] = GroundSurface  # type: ignore[assignment]
) -> GridT:
    """Read a grid file into ``kind`` (GroundSurface unless stated).

    Raises:
        GridFormatError: On bad magic, truncation or dimension mismatch
    """
    data = Path(path).read_bytes()
    spec, offset = _unpack_header(data, path)
    n = spec.rows * spec.cols
    _check_length(data, offset + 4 * n + (n + 7) // 8, path)
    values = np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float64)
    valid = _unpack_mask(data, offset + 4 * n, spec)
    values = np.where(valid, values.reshape(spec.shape), kind.fill_value)
    return kind(spec, values, valid)


def write_count_grid(path: Path, grid: CountGrid) -> None:
    with atomic_write(Path(path)) as f:
        f.write(_pack_header(grid.spec))
        f.write(grid.counts.astype("<u4").tobytes())


def read_count_grid(path: Path) -> CountGrid:
    data = Path(path).read_bytes()
    spec, offset = _unpack_header(data, path)
    n = spec.rows * spec.cols
    _check_length(data, offset + 4 * n, path)
    counts = np.frombuffer(data, dtype="<u4", count=n, offset=offset)
    return CountGrid(spec, counts.reshape(spec.shape).copy())


def write_channels(
    path: Path, spec: GridSpec, channels: np.ndarray, valid: np.ndarray
) -> None:
    """Write a (C, rows, cols) stack with the extended channel-count header."""
    channels = np.asarray(channels)
    with atomic_write(Path(path)) as f:
        f.write(_pack_header(spec))
        f.write(_CHANNELS.pack(channels.shape[0]))
        f.write(channels.astype("<f4").tobytes())
        f.write(_pack_mask(valid))


def read_channels(path: Path) -> tuple[GridSpec, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    spec, offset = _unpack_header(data, path)
    if len(data) < offset + _CHANNELS.size:
        raise GridFormatError(f"{path}: truncated channel header")
    (count,) = _CHANNELS.unpack_from(data, offset)
    offset += _CHANNELS.size
    n = spec.rows * spec.cols
    _check_length(data, offset + 4 * n * count + (n + 7) // 8, path)
    channels = np.frombuffer(data, dtype="<f4", count=n * count, offset=offset)
    valid = _unpack_mask(data, offset + 4 * n * count, spec)
    return spec, channels.reshape(count, *spec.shape).astype(np.float64), valid


# --- Inspection images -------------------------------------------------------


def write_pgm(
    path: Path, values: np.ndarray, valid: Optional[np.ndarray] = None
) -> None:
    """Render a grid as an 8-bit binary PGM.

    Valid cells are min-max normalized onto 1..255; invalid cells are 0.
    """
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(values)
    image = np.zeros(values.shape, dtype=np.uint8)
    if valid.any():
        lo, hi = values[valid].min(), values[valid].max()
        span = hi - lo if hi > lo else 1.0
        image[valid] = 1 + np.round((values[valid] - lo) / span * 254).astype(np.uint8)
    rows, cols = image.shape
    with atomic_write(Path(path)) as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(image.tobytes())
