"""Pipeline stages for ground-aware lidar preprocessing."""

from .anchor_engine import AnchorEngine, AnchorSet
from .bev_features import BevFeatures, FeatureExtractor
from .bev_grid import (
    bin_points,
    build_count_grid,
    build_height_map,
    crop_roi,
    integral,
    region_count,
    region_counts,
    roi_mask,
)
from .ground_surface import GroundEstimator, GroundLabels, ground_at
from .plane_baseline import PlaneBaseline, PlaneFit, PlaneModel, plane_z
from .scene_augment import (
    Donor,
    Scene,
    SceneAugmenter,
    TransplantResult,
    extract_donors,
    flip_scene,
    is_relatively_empty,
    rotate_scene,
)

__all__ = [
    'AnchorEngine',
    'AnchorSet',
    'BevFeatures',
    'Donor',
    'FeatureExtractor',
    'GroundEstimator',
    'GroundLabels',
    'PlaneBaseline',
    'PlaneFit',
    'PlaneModel',
    'Scene',
    'SceneAugmenter',
    'TransplantResult',
    'bin_points',
    'build_count_grid',
    'build_height_map',
    'crop_roi',
    'extract_donors',
    'flip_scene',
    'ground_at',
    'integral',
    'is_relatively_empty',
    'plane_z',
    'region_count',
    'region_counts',
    'roi_mask',
    'rotate_scene',
]
