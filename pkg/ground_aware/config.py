"""Configuration settings and defaults for ground-aware lidar processing."""

import math
import os
import sys
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
    from typing import Self
else:
    import tomli as tomllib
    from typing_extensions import Self

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ground_aware.core import InputValidationError

SEED_ENV_VAR = "GAL_SEED"


class _Section(BaseModel):
    """Base for config sections: unknown keys are rejected."""

    model_config = {"extra": "forbid", "validate_assignment": True}

    def override(self, **changes: Any) -> Self:
        """Return a validated copy with the non-None changes applied."""
        update = {k: v for k, v in changes.items() if v is not None}
        return type(self).model_validate({**self.model_dump(), **update})


class RoiConfig(_Section):
    """Region of interest; half-open on every axis."""

    x_min: float = -50.0
    x_max: float = 50.0
    y_min: float = -30.0
    y_max: float = 30.0
    z_min: float = -3.0
    z_max: float = 3.0

    @model_validator(mode="after")
    def check_bounds(self) -> "RoiConfig":
        for axis in ("x", "y", "z"):
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not lo < hi:
                raise ValueError(f"{axis}_min must be < {axis}_max, got {lo} >= {hi}")
        return self


class GridConfig(_Section):
    cell_size: float = Field(default=0.1, gt=0, description="BEV cell size in meters")


class FilterConfig(_Section):
    """Min-filter window half extents in meters (rounded up to whole cells)."""

    half_window_x: float = Field(default=1.5, gt=0)
    half_window_y: float = Field(default=1.5, gt=0)


class RansacConfig(_Section):
    iterations: int = Field(default=512, ge=1)
    inlier_threshold: float = Field(default=0.2, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


class AnchorConfig(_Section):
    stride: float = Field(default=0.5, gt=0)
    sizes: list[tuple[float, float, float]] = Field(
        default_factory=lambda: [(3.9, 1.6, 1.56)],
        min_length=1,
        description="(l, w, h) templates in meters",
    )
    orientations: list[float] = Field(
        default_factory=lambda: [0.0, math.pi / 2], min_length=1
    )
    min_points: int = Field(default=1, ge=1)
    nms_iou_threshold: float = Field(default=0.7, gt=0, le=1)
    nms_top_n: int = Field(default=300, ge=1)

    @field_validator("sizes")
    @classmethod
    def validate_sizes(
        cls, v: list[tuple[float, float, float]]
    ) -> list[tuple[float, float, float]]:
        for size in v:
            if min(size) <= 0:
                raise ValueError(f"Anchor size dimensions must be positive: {size}")
        return v

    @property
    def interpolation_radius(self) -> float:
        """k = d / 2 for the largest template diagonal d."""
        return max(math.hypot(l, w) for l, w, _ in self.sizes) / 2  # noqa: E741


class FeatureConfig(_Section):
    num_slices: int = Field(default=5, ge=1)
    slice_min: float = 0.0
    slice_max: float = 2.5

    @model_validator(mode="after")
    def check_span(self) -> "FeatureConfig":
        if not self.slice_max > self.slice_min:
            raise ValueError("slice_max must exceed slice_min")
        return self


class AugmentConfig(_Section):
    margin: float = Field(default=0.5, ge=0, description="Clearance around donors")
    max_existing_objects: Optional[int] = Field(default=None, ge=0)


class BenchConfig(_Section):
    repetitions: int = Field(default=50, ge=1)
    warmup: int = Field(default=5, ge=0)
    points: int = Field(default=120_000, gt=0)


class Settings(BaseModel):
    """Configuration settings for ground-aware operations."""

    roi: RoiConfig = Field(default_factory=RoiConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    ransac: RansacConfig = Field(default_factory=RansacConfig)
    anchors: AnchorConfig = Field(default_factory=AnchorConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)

    # Point-to-surface tolerance used by ground classification
    ground_tolerance: float = Field(default=0.2, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    model_config = {"extra": "forbid", "validate_assignment": True}


def load_settings(path: Optional[Path] = None) -> Settings:
    """Load settings from an optional TOML file, then apply ``GAL_SEED``.

    Raises:
        InputValidationError: If the file is unreadable, malformed or invalid
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with path.open("rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError as err:
            raise InputValidationError(f"Config file not found: {path}") from err
        except tomllib.TOMLDecodeError as err:
            raise InputValidationError(f"Malformed config {path}: {err}") from err

    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as err:
            raise InputValidationError(
                f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}"
            ) from err
        data["seed"] = seed
        data.setdefault("ransac", {})["seed"] = seed

    try:
        return Settings.model_validate(data)
    except ValidationError as err:
        raise InputValidationError(f"Invalid configuration: {err}") from err
