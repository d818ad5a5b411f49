"""Named layout configurations and their companion metric-target profiles.

The six presets walk from plain random floor placement to occlusion-aware,
re-weighted scales, full 3D rotations, parametric room backgrounds, and
finally floating placement that packs more objects per image. Each also has a
metric-target profile (measured dataset statistics) usable as a search target.
"""

from __future__ import annotations

from .scene import BackgroundSpec, IntervalScale, LayoutParams, UniformScale
from .search import MetricTarget

_CUBE = BackgroundSpec("white_cube", side=10.0)
_ROOM = BackgroundSpec("room_shell")

_EYE_LEVEL = dict(camera_height_range=(1.0, 2.0), look_at_height_range=(0.5, 1.5))


def _preset_params() -> dict[str, LayoutParams]:
    random_placement = LayoutParams(
        placement="random_floor", rotation_axes="z_only",
        scale_mode=UniformScale(0.4, 2.0), background=_CUBE,
        camera_height_range=(0.1, 5.0), look_at_height_range=(0.0, 2.0),
        target_object_count=12)
    # eye-level shots make it easier to place objects in front of each other
    occlusion = random_placement.replace(
        placement="occlusion_aware", **_EYE_LEVEL)
    scale_distribution = occlusion.replace(scale_mode=IntervalScale())
    rotation = scale_distribution.replace(rotation_axes="all_axes")
    scenenet_background = rotation.replace(background=_ROOM)
    more_objects = scenenet_background.replace(
        placement="floating", target_object_count=24)
    return {
        "random_placement": random_placement,
        "occlusion": occlusion,
        "scale_distribution": scale_distribution,
        "rotation": rotation,
        "scenenet_background": scenenet_background,
        "more_objects": more_objects,
    }


PRESETS: dict[str, LayoutParams] = _preset_params()

# Measured dataset profiles for each configuration, usable as search targets.
METRIC_TARGETS: dict[str, MetricTarget] = {
    "random_placement": MetricTarget(0.19, (0.18, 0.52, 0.30), 8.73),
    "occlusion": MetricTarget(0.32, (0.23, 0.48, 0.29), 7.73),
    "scale_distribution": MetricTarget(0.33, (0.32, 0.37, 0.31), 8.47),
    "rotation": MetricTarget(0.33, (0.35, 0.36, 0.29), 8.10),
    "scenenet_background": MetricTarget(0.37, (0.38, 0.34, 0.28), 8.72),
    "more_objects": MetricTarget(0.38, (0.33, 0.39, 0.28), 13.72),
}


def preset(name: str, seed: int | None = None) -> LayoutParams:
    try:
        params = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return params if seed is None else params.replace(seed=seed)
