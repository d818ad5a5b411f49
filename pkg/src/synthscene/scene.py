"""Scene assembly: backgrounds, camera sampling with clearance ray casting,
object scale/rotation sampling, the three placement strategies, and turntable
query poses.

Randomness is fully reproducible: every scene draws from
``Generator(PCG64(SeedSequence(entropy=params.seed, spawn_key=(scene_index,))))``
and all sampling consumes that single stream in a fixed order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (Aabb, Camera, Ray, Rotation, aabb_intersects, normalize,
                       point_in_frustum, ray_cast, transformed_aabb,
                       unproject_pixel, vec3)
from .jsonutil import dumps_canonical
from .mesh import TriangleMesh, make_box

WALL_MARGIN = 0.3  # camera keeps this far from background walls


class PlacementExhausted(RuntimeError):
    """No valid sample found within max_placement_attempts."""


def scene_rng(seed: int, scene_index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(scene_index,))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# backgrounds


@dataclass(frozen=True)
class BackgroundShell:
    """Closed floor/walls/ceiling box; floor at z = 0, centered on the z axis."""

    kind: str                # "white_cube" | "room_shell"
    extents: np.ndarray      # (w, d, h)
    mesh: TriangleMesh

    @staticmethod
    def white_cube(side: float = 10.0) -> "BackgroundShell":
        return BackgroundShell("white_cube", np.array([side, side, side], dtype=np.float64),
                               _shell_mesh(side, side, side))

    @staticmethod
    def room_shell(width: float, depth: float, height: float) -> "BackgroundShell":
        return BackgroundShell("room_shell",
                               np.array([width, depth, height], dtype=np.float64),
                               _shell_mesh(width, depth, height))

    def interior(self) -> Aabb:
        w, d, h = self.extents
        return Aabb(vec3(-w / 2, -d / 2, 0.0), vec3(w / 2, d / 2, h))


def _shell_mesh(w: float, d: float, h: float) -> TriangleMesh:
    box = make_box(w, d, h)
    return TriangleMesh(box.vertices + vec3(0, 0, h / 2), box.faces)


@dataclass(frozen=True)
class BackgroundSpec:
    """Recipe for a per-scene background; room dimensions may be ranges."""

    kind: str = "white_cube"
    side: float = 10.0
    width_range: tuple[float, float] = (4.0, 10.0)
    depth_range: tuple[float, float] = (4.0, 10.0)
    height_range: tuple[float, float] = (2.5, 3.5)

    def realize(self, rng: np.random.Generator) -> BackgroundShell:
        if self.kind == "white_cube":
            return BackgroundShell.white_cube(self.side)
        if self.kind == "room_shell":
            w = _uniform(rng, *self.width_range)
            d = _uniform(rng, *self.depth_range)
            h = _uniform(rng, *self.height_range)
            return BackgroundShell.room_shell(w, d, h)
        raise ValueError(f"unknown background kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "white_cube":
            return {"kind": "white_cube", "side": float(self.side)}
        return {"kind": "room_shell",
                "width_range": [float(x) for x in self.width_range],
                "depth_range": [float(x) for x in self.depth_range],
                "height_range": [float(x) for x in self.height_range]}

    @staticmethod
    def from_dict(d: dict) -> "BackgroundSpec":
        if d["kind"] == "white_cube":
            return BackgroundSpec("white_cube", side=float(d["side"]))
        return BackgroundSpec("room_shell",
                              width_range=tuple(d["width_range"]),
                              depth_range=tuple(d["depth_range"]),
                              height_range=tuple(d["height_range"]))


def _uniform(rng, lo, hi):
    return float(lo + rng.random() * (hi - lo))


# ---------------------------------------------------------------------------
# layout parameters


@dataclass(frozen=True)
class UniformScale:
    lo: float = 0.4
    hi: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.lo <= self.hi):
            raise ValueError(f"bad scale range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class IntervalScale:
    """(lo, hi, probability) triples; probabilities sum to 1."""

    intervals: tuple[tuple[float, float, float], ...] = (
        (0.1, 1.0, 0.7), (1.0, 2.0, 0.1), (2.0, 3.0, 0.2))

    def __post_init__(self):
        total = 0.0
        for lo, hi, p in self.intervals:
            if not (0.0 < lo <= hi) or p < 0.0:
                raise ValueError(f"bad interval ({lo}, {hi}, {p})")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"interval probabilities sum to {total}, expected 1")


def scale_mode_to_dict(mode) -> dict:
    if isinstance(mode, UniformScale):
        return {"kind": "uniform_range", "lo": float(mode.lo), "hi": float(mode.hi)}
    return {"kind": "intervals",
            "intervals": [[float(a), float(b), float(p)] for a, b, p in mode.intervals]}


def scale_mode_from_dict(d: dict):
    if d["kind"] == "uniform_range":
        return UniformScale(float(d["lo"]), float(d["hi"]))
    return IntervalScale(tuple(tuple(map(float, iv)) for iv in d["intervals"]))


@dataclass(frozen=True)
class LayoutParams:
    """Full parameter vector steering scene generation."""

    placement: str = "random_floor"      # random_floor | occlusion_aware | floating
    rotation_axes: str = "z_only"        # z_only | all_axes
    scale_mode: object = field(default_factory=UniformScale)
    camera_height_range: tuple[float, float] = (0.1, 5.0)
    look_at_height_range: tuple[float, float] = (0.0, 2.0)
    camera_clearance_min: float = 1.5
    camera_min_radius: float | None = None   # None -> quarter of background extent
    p_occlusion: float = 0.8
    occlusion_offset_range: tuple[float, float] = (0.3, 2.0)
    target_object_count: int = 10
    max_placement_attempts: int = 100
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    image_width: int = 320
    image_height: int = 240
    vertical_fov_deg: float = 60.0
    near: float = 0.05
    far: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.placement not in ("random_floor", "occlusion_aware", "floating"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.rotation_axes not in ("z_only", "all_axes"):
            raise ValueError(f"unknown rotation_axes {self.rotation_axes!r}")
        if self.target_object_count < 1:
            raise ValueError("target_object_count must be >= 1")
        for name in ("camera_height_range", "look_at_height_range",
                     "occlusion_offset_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"empty range {name}=({lo}, {hi})")
        if not 0.0 <= self.p_occlusion <= 1.0:
            raise ValueError("p_occlusion must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "placement": self.placement,
            "rotation_axes": self.rotation_axes,
            "scale_mode": scale_mode_to_dict(self.scale_mode),
            "camera_height_range": [float(x) for x in self.camera_height_range],
            "look_at_height_range": [float(x) for x in self.look_at_height_range],
            "camera_clearance_min": float(self.camera_clearance_min),
            "camera_min_radius": None if self.camera_min_radius is None
                                 else float(self.camera_min_radius),
            "p_occlusion": float(self.p_occlusion),
            "occlusion_offset_range": [float(x) for x in self.occlusion_offset_range],
            "target_object_count": int(self.target_object_count),
            "max_placement_attempts": int(self.max_placement_attempts),
            "background": self.background.to_dict(),
            "image_width": int(self.image_width),
            "image_height": int(self.image_height),
            "vertical_fov_deg": float(self.vertical_fov_deg),
            "near": float(self.near),
            "far": float(self.far),
            "seed": int(self.seed),
        }

    @staticmethod
    def from_dict(d: dict) -> "LayoutParams":
        return LayoutParams(
            placement=d["placement"],
            rotation_axes=d["rotation_axes"],
            scale_mode=scale_mode_from_dict(d["scale_mode"]),
            camera_height_range=tuple(d["camera_height_range"]),
            look_at_height_range=tuple(d["look_at_height_range"]),
            camera_clearance_min=float(d["camera_clearance_min"]),
            camera_min_radius=None if d.get("camera_min_radius") is None
                              else float(d["camera_min_radius"]),
            p_occlusion=float(d["p_occlusion"]),
            occlusion_offset_range=tuple(d["occlusion_offset_range"]),
            target_object_count=int(d["target_object_count"]),
            max_placement_attempts=int(d["max_placement_attempts"]),
            background=BackgroundSpec.from_dict(d["background"]),
            image_width=int(d["image_width"]),
            image_height=int(d["image_height"]),
            vertical_fov_deg=float(d["vertical_fov_deg"]),
            near=float(d["near"]),
            far=float(d["far"]),
            seed=int(d["seed"]),
        )

    def digest(self) -> str:
        return hashlib.sha256(dumps_canonical(self.to_dict()).encode()).hexdigest()[:12]

    def replace(self, **kw) -> "LayoutParams":
        import dataclasses
        return dataclasses.replace(self, **kw)


# ---------------------------------------------------------------------------
# scene types


@dataclass(frozen=True, eq=False)
class ObjectInstance:
    model_id: str
    mesh: TriangleMesh = field(repr=False)
    translation: np.ndarray = field(default_factory=lambda: vec3(0, 0, 0))
    rotation: Rotation = field(default_factory=Rotation.identity)
    scale: float = 1.0
    world_aabb: Aabb = None

    def __post_init__(self):
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64))
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.world_aabb is None:
            object.__setattr__(self, "world_aabb", transformed_aabb(
                self.mesh.aabb(), self.rotation, self.scale, self.translation))


@dataclass(frozen=True, eq=False)
class Scene:
    background: BackgroundShell | None
    instances: tuple[ObjectInstance, ...]
    camera: Camera
    light_anchor: int = 0
    seed: int = 0
    scene_index: int = 0
    params_digest: str = ""


# ---------------------------------------------------------------------------
# samplers


def sample_scale(params: LayoutParams, rng: np.random.Generator) -> float:
    mode = params.scale_mode
    if isinstance(mode, UniformScale):
        return _uniform(rng, mode.lo, mode.hi)
    r = rng.random()
    acc = 0.0
    chosen = mode.intervals[-1]
    for iv in mode.intervals:
        acc += iv[2]
        if r < acc:
            chosen = iv
            break
    return _uniform(rng, chosen[0], chosen[1])


def sample_rotation(params: LayoutParams, rng: np.random.Generator) -> Rotation:
    if params.rotation_axes == "z_only":
        return Rotation.about_z(rng.random() * 2.0 * math.pi)
    return Rotation.random_uniform(rng)


def sample_camera(params: LayoutParams, background: BackgroundShell,
                  rng: np.random.Generator) -> Camera:
    """Place a camera away from the background center, aimed at the central
    area, with a clear line of sight of at least ``camera_clearance_min``."""
    w, d, h = background.extents
    min_radius = (params.camera_min_radius if params.camera_min_radius is not None
                  else float(min(w, d)) / 4.0)
    z_lo = max(params.camera_height_range[0], 0.05)
    z_hi = min(params.camera_height_range[1], h - 0.1)
    if z_lo > z_hi:
        raise PlacementExhausted(
            f"camera height range {params.camera_height_range} does not fit "
            f"under ceiling height {h}")
    la_lo = max(params.look_at_height_range[0], 0.0)
    la_hi = min(params.look_at_height_range[1], h - 0.1)
    tri = background.mesh.triangles()

    for _ in range(params.max_placement_attempts):
        x = _uniform(rng, -w / 2 + WALL_MARGIN, w / 2 - WALL_MARGIN)
        y = _uniform(rng, -d / 2 + WALL_MARGIN, d / 2 - WALL_MARGIN)
        z = _uniform(rng, z_lo, z_hi)
        lx = _uniform(rng, -w / 4, w / 4)
        ly = _uniform(rng, -d / 4, d / 4)
        lz = _uniform(rng, la_lo, la_hi)
        if math.hypot(x, y) < min_radius:
            continue
        pos = vec3(x, y, z)
        target = vec3(lx, ly, lz)
        to_target = target - pos
        dist = float(np.linalg.norm(to_target))
        if dist < 1e-9:
            continue
        hit = ray_cast(Ray(pos, to_target / dist), *tri)
        if hit is not None and hit[0] < params.camera_clearance_min:
            continue  # too close to an obstacle: sample another location
        return Camera(pos, target, vec3(0, 0, 1), params.vertical_fov_deg,
                      params.image_width, params.image_height, params.near, params.far)
    raise PlacementExhausted("no valid camera pose found")


# ---------------------------------------------------------------------------
# placement


def _fits(world_box: Aabb, interior: Aabb, existing) -> bool:
    lo, hi = world_box.lo, world_box.hi
    if (lo[0] <= interior.lo[0] or hi[0] >= interior.hi[0]
            or lo[1] <= interior.lo[1] or hi[1] >= interior.hi[1]
            or lo[2] < -1e-12 or hi[2] >= interior.hi[2]):
        return False
    return all(not aabb_intersects(world_box, inst.world_aabb) for inst in existing)


def place_object(background: BackgroundShell, camera: Camera, existing,
                 model_id: str, mesh: TriangleMesh, params: LayoutParams,
                 rng: np.random.Generator, scale: float | None = None,
                 rotation: Rotation | None = None,
                 strategy: str | None = None) -> ObjectInstance:
    """Place one scaled, rotated model without AABB collisions.

    Strategies:
      random_floor    — position sampled on the visible floor, box resting on it
      occlusion_aware — with probability p_occlusion, position along the camera
                        ray through an existing instance (in front or behind),
                        floor-constrained; otherwise random_floor
      floating        — position sampled anywhere in the visible volume
    """
    if scale is None:
        scale = sample_scale(params, rng)
    if rotation is None:
        rotation = sample_rotation(params, rng)
    if strategy is None:
        strategy = params.placement
    base_box = transformed_aabb(mesh.aabb(), rotation, scale, vec3(0, 0, 0))
    lift = -float(base_box.lo[2])
    interior = background.interior()
    diag = float(np.linalg.norm(background.extents))

    for _ in range(params.max_placement_attempts):
        translation = None
        if strategy == "floating":
            px = rng.random() * camera.width
            py = rng.random() * camera.height
            depth = _uniform(rng, 0.5, diag)
            translation = unproject_pixel(camera, px, py, depth)
        elif (strategy == "occlusion_aware" and existing
              and rng.random() < params.p_occlusion):
            ref = existing[int(rng.integers(len(existing)))]
            to_ref = ref.translation - camera.position
            dist_ref = float(np.linalg.norm(to_ref))
            off = _uniform(rng, *params.occlusion_offset_range)
            if rng.random() < 0.5:
                off = -off
            center = camera.position + (dist_ref + off) * (to_ref / dist_ref)
            translation = vec3(center[0], center[1], lift)
        else:
            px = rng.random() * camera.width
            py = rng.random() * camera.height
            direction = unproject_pixel(camera, px, py, 1.0) - camera.position
            direction = normalize(direction)
            if direction[2] >= -1e-9:
                continue  # pixel ray never reaches the floor
            t = -camera.position[2] / direction[2]
            floor_pt = camera.position + t * direction
            translation = vec3(floor_pt[0], floor_pt[1], lift)

        world_box = base_box.translated(translation)
        if not point_in_frustum(camera, translation):
            continue
        if not _fits(world_box, interior, existing):
            continue
        return ObjectInstance(model_id, mesh, translation, rotation, scale, world_box)
    raise PlacementExhausted(f"could not place {model_id!r} ({strategy})")


# ---------------------------------------------------------------------------
# full assembly


def assemble_scene(params: LayoutParams, catalog, scene_index: int = 0) -> Scene:
    """Sample a camera and up to ``target_object_count`` placed objects.

    Models are drawn uniformly with replacement from the catalog. Objects
    whose placement attempts are exhausted are skipped; the scene fails only
    if nothing could be placed.
    """
    if len(catalog) == 0:
        raise ValueError("empty model catalog")
    rng = scene_rng(params.seed, scene_index)
    background = params.background.realize(rng)
    camera = sample_camera(params, background, rng)
    ids = catalog.ids()
    instances: list[ObjectInstance] = []
    for _ in range(params.target_object_count):
        model_id = ids[int(rng.integers(len(ids)))]
        scale = sample_scale(params, rng)
        rotation = sample_rotation(params, rng)
        try:
            inst = place_object(background, camera, instances, model_id,
                                catalog[model_id], params, rng,
                                scale=scale, rotation=rotation)
        except PlacementExhausted:
            continue
        instances.append(inst)
    if not instances:
        raise PlacementExhausted("no objects could be placed in the scene")
    light_anchor = int(rng.integers(len(instances)))
    return Scene(background, tuple(instances), camera, light_anchor,
                 params.seed, scene_index, params.digest())


# ---------------------------------------------------------------------------
# turntable query poses


def query_poses(mesh: TriangleMesh, model_id: str = "model",
                width: int = 320, height: int = 240,
                vertical_fov_deg: float = 35.0, elevation_deg: float = 40.0,
                fill_target: float = 0.86) -> list[tuple[Camera, ObjectInstance]]:
    """8 turntable poses of an isolated object at 45-degree z-rotation steps.

    The camera is fitted so the widest projected-vertex bounding box over the
    8 poses spans ``fill_target`` of the smaller image dimension. A longer
    lens and a raised viewpoint keep pose-to-pose size variation mild, so
    every pose stays between 60% and 90% of the frame.
    """
    mesh = mesh.normalized()
    rotations = [Rotation.about_z(math.radians(45.0 * k)) for k in range(8)]
    el = math.radians(elevation_deg)
    view_dir = vec3(math.cos(el), 0.0, math.sin(el))  # object -> camera

    dist = 3.0
    for _ in range(10):  # multiplicative refit; converges in a few rounds
        cam = _pose_camera(view_dir, dist, width, height, vertical_fov_deg)
        max_fill = max(projected_fill(cam, mesh, rot) for rot in rotations)
        if abs(max_fill - fill_target) < 0.005:
            break
        dist *= max_fill / fill_target

    cam = _pose_camera(view_dir, dist, width, height, vertical_fov_deg)
    return [(cam, ObjectInstance(model_id, mesh, vec3(0, 0, 0), rot, 1.0))
            for rot in rotations]


def projected_fill(cam: Camera, mesh: TriangleMesh, rotation: Rotation) -> float:
    """Projected 2D bounding-box size of the rotated mesh, as a fraction of
    the smaller image dimension."""
    right, up, fwd = cam.basis()
    tx, ty = cam.tan_half_fov()
    rel = rotation.apply(mesh.vertices) - cam.position
    z = rel @ fwd
    px = (rel @ right) / (z * tx)
    py = (rel @ up) / (z * ty)
    size = max(float(px.max() - px.min()) * 0.5 * cam.width,
               float(py.max() - py.min()) * 0.5 * cam.height)
    return size / min(cam.width, cam.height)


def _pose_camera(view_dir, dist, width, height, fov):
    return Camera(view_dir * dist, vec3(0, 0, 0), vec3(0, 0, 1), fov,
                  width, height, 0.05, 100.0)


def _project(cam, p):
    from .geometry import project_point
    return project_point(cam, p)
