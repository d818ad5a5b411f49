"""Proxy scene-complexity metrics: per-object occlusion, scale classes,
visible-object counts, and viewpoint histograms, aggregated over datasets.

Occlusion of an object is (n_f - n_p) / n_f, where n_p counts its visible
pixels with every object present and n_f counts them with all *other* objects
hidden. Objects with n_f = 0 never entered the frame and are excluded;
objects with n_p = 0 but n_f > 0 are fully occluded (occlusion 1.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Camera
from .raster import LabelBuffer, MaskPair, mask_pairs

N_AZIMUTH_BINS = 16
N_ELEVATION_BINS = 8


@dataclass(frozen=True)
class ScaleThresholds:
    """Pixel-area cutoffs between small/medium/large objects (COCO-style)."""

    small_max_area: float = 32.0 ** 2
    medium_max_area: float = 96.0 ** 2

    def __post_init__(self):
        if not (0 < self.small_max_area < self.medium_max_area):
            raise ValueError("need 0 < small_max_area < medium_max_area")

    @staticmethod
    def for_resolution(width: int, height: int,
                       reference: tuple[int, int] = (320, 240)) -> "ScaleThresholds":
        """Default cutoffs rescaled by pixel count relative to the reference
        analysis resolution, so scale classes stay resolution-independent."""
        ratio = (width * height) / (reference[0] * reference[1])
        return ScaleThresholds(32.0 ** 2 * ratio, 96.0 ** 2 * ratio)


def occlusion_of(pair: MaskPair) -> float | None:
    """(n_f - n_p) / n_f, or None when the object never entered the frame."""
    if pair.n_f == 0:
        return None
    return (pair.n_f - pair.n_p) / pair.n_f


def classify_scale(n_p: int, thresholds: ScaleThresholds = ScaleThresholds()) -> str | None:
    """Scale class by visible mask area; None for invisible objects."""
    if n_p <= 0:
        return None
    if n_p <= thresholds.small_max_area:
        return "small"
    if n_p <= thresholds.medium_max_area:
        return "medium"
    return "large"


def count_visible(buffer: LabelBuffer, min_visible_pixels: int = 1) -> int:
    """Distinct instance labels with at least ``min_visible_pixels`` pixels."""
    counts = np.bincount(buffer.labels.ravel())
    return int(np.count_nonzero(counts[1:] >= min_visible_pixels))


def viewpoint_bin(instance, cam: Camera,
                  n_az: int = N_AZIMUTH_BINS,
                  n_el: int = N_ELEVATION_BINS) -> tuple[int, int]:
    """Bin of the object-frame direction from the object center to the camera.

    Azimuth in [0, 360) and elevation in [-90, 90] split into equal-angle bins;
    returns (azimuth_bin, elevation_bin).
    """
    v = cam.position - instance.translation
    local = instance.rotation.inverse().apply(v)
    r = float(np.linalg.norm(local))
    if r == 0.0:
        raise ValueError("camera coincides with the object center")
    az = math.atan2(local[1], local[0]) % (2.0 * math.pi)
    el = math.asin(max(-1.0, min(1.0, local[2] / r)))
    az_bin = min(int(az / (2.0 * math.pi) * n_az), n_az - 1)
    el_bin = min(int((el + 0.5 * math.pi) / math.pi * n_el), n_el - 1)
    return az_bin, el_bin


# ---------------------------------------------------------------------------
# per-scene extraction and streaming aggregation


@dataclass(frozen=True)
class SceneStats:
    """One scene's contribution to the dataset metrics."""

    visible_count: int
    occlusions: tuple[float, ...]           # defined occlusions (n_f > 0)
    scale_counts: tuple[int, int, int]      # (small, medium, large) of visible
    viewpoint_hist: np.ndarray              # (n_az, n_el) int64, visible only


def scene_stats(scene, pairs: list[MaskPair] | None = None,
                resolution: tuple[int, int] | None = None,
                thresholds: ScaleThresholds = ScaleThresholds()) -> SceneStats:
    if pairs is None:
        pairs = mask_pairs(scene, resolution=resolution)
    occl = []
    scale_counts = [0, 0, 0]
    hist = np.zeros((N_AZIMUTH_BINS, N_ELEVATION_BINS), dtype=np.int64)
    visible = 0
    for pair in pairs:
        o = occlusion_of(pair)
        if o is not None:
            occl.append(o)
        cls = classify_scale(pair.n_p, thresholds)
        if cls is not None:
            visible += 1
            scale_counts[("small", "medium", "large").index(cls)] += 1
            inst = scene.instances[pair.instance_id - 1]
            az, el = viewpoint_bin(inst, scene.camera)
            hist[az, el] += 1
    return SceneStats(visible, tuple(occl), tuple(scale_counts), hist)


@dataclass(frozen=True)
class ProxyMetrics:
    """Dataset-level metric bundle; ``empty`` when aggregated over nothing."""

    object_count: float | None
    avg_occlusion: float | None
    scale_dist: tuple[float, float, float] | None
    viewpoint_hist: np.ndarray
    n_scenes: int
    n_visible_instances: int

    @property
    def empty(self) -> bool:
        return self.n_scenes == 0

    def topbottom_mass(self) -> float | None:
        """Fraction of visible instances seen from steeper than 45 degrees
        above or below: the top and bottom elevation bins (outer two of the
        eight 22.5-degree bins on each side). The viewpoint-coverage signal:
        near zero for rotations about z only, large for full 3D rotations."""
        total = int(self.viewpoint_hist.sum())
        if total == 0:
            return None
        n_el = self.viewpoint_hist.shape[1]
        tb = int(self.viewpoint_hist[:, :n_el // 4].sum()
                 + self.viewpoint_hist[:, -(n_el // 4):].sum())
        return tb / total

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "n_visible_instances": self.n_visible_instances,
            "object_count": self.object_count,
            "avg_occlusion": self.avg_occlusion,
            "scale_dist": None if self.scale_dist is None
                          else [float(x) for x in self.scale_dist],
            "topbottom_mass": self.topbottom_mass(),
            "viewpoint_hist": [[int(c) for c in row] for row in self.viewpoint_hist],
        }

    @staticmethod
    def from_dict(d: dict) -> "ProxyMetrics":
        return ProxyMetrics(
            object_count=d["object_count"],
            avg_occlusion=d["avg_occlusion"],
            scale_dist=None if d["scale_dist"] is None else tuple(d["scale_dist"]),
            viewpoint_hist=np.asarray(d["viewpoint_hist"], dtype=np.int64),
            n_scenes=int(d["n_scenes"]),
            n_visible_instances=int(d["n_visible_instances"]),
        )


class MetricsAccumulator:
    """Single-pass, mergeable aggregation of SceneStats.

    Merging accumulators is commutative and associative, so datasets can be
    aggregated in chunks in any order.
    """

    def __init__(self):
        self.n_scenes = 0
        self.sum_visible = 0
        self.sum_occlusion = 0.0
        self.n_occlusion = 0
        self.scale_counts = np.zeros(3, dtype=np.int64)
        self.viewpoint_hist = np.zeros((N_AZIMUTH_BINS, N_ELEVATION_BINS), dtype=np.int64)

    def add(self, stats: SceneStats) -> "MetricsAccumulator":
        self.n_scenes += 1
        self.sum_visible += stats.visible_count
        self.sum_occlusion += sum(stats.occlusions)
        self.n_occlusion += len(stats.occlusions)
        self.scale_counts += np.asarray(stats.scale_counts)
        self.viewpoint_hist += stats.viewpoint_hist
        return self

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        self.n_scenes += other.n_scenes
        self.sum_visible += other.sum_visible
        self.sum_occlusion += other.sum_occlusion
        self.n_occlusion += other.n_occlusion
        self.scale_counts += other.scale_counts
        self.viewpoint_hist += other.viewpoint_hist
        return self

    def finalize(self) -> ProxyMetrics:
        n_vis = int(self.scale_counts.sum())
        return ProxyMetrics(
            object_count=self.sum_visible / self.n_scenes if self.n_scenes else None,
            avg_occlusion=(self.sum_occlusion / self.n_occlusion
                           if self.n_occlusion else None),
            scale_dist=(tuple(self.scale_counts / n_vis) if n_vis else None),
            viewpoint_hist=self.viewpoint_hist.copy(),
            n_scenes=self.n_scenes,
            n_visible_instances=n_vis,
        )


def aggregate_metrics(stats_stream) -> ProxyMetrics:
    """Fold a stream of SceneStats into dataset-level ProxyMetrics."""
    acc = MetricsAccumulator()
    for stats in stats_stream:
        acc.add(stats)
    return acc.finalize()


def dataset_metrics(scenes, resolution: tuple[int, int] | None = None,
                    thresholds: ScaleThresholds | None = None) -> ProxyMetrics:
    """Rasterize and aggregate a stream of scenes in one bounded-memory pass."""
    if thresholds is None:
        thresholds = ScaleThresholds()
    return aggregate_metrics(
        scene_stats(s, resolution=resolution, thresholds=thresholds) for s in scenes)
