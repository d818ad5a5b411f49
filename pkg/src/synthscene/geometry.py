"""Core 3D math: vectors, quaternion rotations, boxes, rays, pinhole cameras.

Conventions used throughout the package:
  * right-handed world coordinates, z up, floor at z = 0
  * all scalars are float64
  * a camera looks from ``position`` toward ``look_at``; pixel (0, 0) is the
    top-left image corner, pixel centers sit at (i + 0.5, j + 0.5)
  * depth values are view-space depth (distance along the camera forward
    axis), not distance along the ray
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def vec3(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def norm(v: np.ndarray) -> float:
    return float(np.sqrt(v @ v))


def normalize(v: np.ndarray) -> np.ndarray:
    n = norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


# ---------------------------------------------------------------------------
# rotations


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion (w, x, y, z). Immutable; compose with ``@``."""

    w: float
    x: float
    y: float
    z: float

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: np.ndarray, angle: float) -> "Rotation":
        a = normalize(np.asarray(axis, dtype=np.float64))
        h = 0.5 * angle
        s = math.sin(h)
        return Rotation(math.cos(h), a[0] * s, a[1] * s, a[2] * s)

    @staticmethod
    def about_z(angle: float) -> "Rotation":
        h = 0.5 * angle
        return Rotation(math.cos(h), 0.0, 0.0, math.sin(h))

    @staticmethod
    def random_uniform(rng: np.random.Generator) -> "Rotation":
        # Shoemake's subgroup algorithm: Haar-uniform on SO(3).
        u1, u2, u3 = rng.random(3)
        a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
        t2, t3 = 2.0 * math.pi * u2, 2.0 * math.pi * u3
        return Rotation(b * math.cos(t3), a * math.sin(t2),
                        a * math.cos(t2), b * math.sin(t3))

    def normalized(self) -> "Rotation":
        n = math.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2)
        return Rotation(self.w / n, self.x / n, self.y / n, self.z / n)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        """Composition: (self @ other) applies ``other`` first, then ``self``."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ], dtype=np.float64)

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Rotation":
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0:
            s = math.sqrt(t + 1.0) * 2
            return Rotation(0.25 * s, (m[2, 1] - m[1, 2]) / s,
                            (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s).normalized()
        i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2
        q = [0.0, 0.0, 0.0, 0.0]
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
        return Rotation(*q).normalized()

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Rotate one vector or an (N, 3) array of vectors."""
        return np.asarray(v, dtype=np.float64) @ self.matrix().T


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box; ``lo`` <= ``hi`` componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if not bool(np.all(self.lo <= self.hi)):
            raise ValueError(f"invalid box: lo={self.lo} hi={self.hi}")

    @staticmethod
    def of_points(pts: np.ndarray) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64)
        return Aabb(pts.min(axis=0), pts.max(axis=0))

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z]
                         for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])], dtype=np.float64)

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def size(self) -> np.ndarray:
        return self.hi - self.lo

    def translated(self, t: np.ndarray) -> "Aabb":
        return Aabb(self.lo + t, self.hi + t)


def aabb_intersects(a: Aabb, b: Aabb) -> bool:
    """True when the boxes overlap; touching faces count as intersecting."""
    return bool(np.all(a.lo <= b.hi) and np.all(b.lo <= a.hi))


def transformed_aabb(box: Aabb, rotation: Rotation, scale: float,
                     translation: np.ndarray) -> Aabb:
    """Tight axis-aligned box of the rotated/scaled corners of ``box``."""
    pts = rotation.apply(box.corners() * scale) + translation
    return Aabb.of_points(pts)


# ---------------------------------------------------------------------------
# rays and triangle casting


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit-norm

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)
        if abs(norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit-norm")


def ray_cast(ray: Ray, v0: np.ndarray, v1: np.ndarray, v2: np.ndarray,
             instance_ids: np.ndarray | None = None, far: float = math.inf):
    """Nearest positive-distance hit of a ray against a triangle soup.

    v0, v1, v2: (T, 3) vertex arrays. Returns (distance, instance_id) for the
    nearest hit closer than ``far``, or None. Degenerate triangles never hit.
    Ties within 1e-9 are broken by lower instance id, then lower triangle
    index, matching the rasterizer's rule.
    """
    o, d = ray.origin, ray.direction
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    s = o - v0
    u_num = np.einsum("ij,ij->i", s, pvec)
    qvec = np.cross(s, e1)
    v_num = qvec @ d
    t_num = np.einsum("ij,ij->i", e2, qvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inside_pos = (det > 0) & (u_num >= 0) & (v_num >= 0) & (u_num + v_num <= det)
        inside_neg = (det < 0) & (u_num <= 0) & (v_num <= 0) & (u_num + v_num >= det)
        t = t_num / det
    hit = (inside_pos | inside_neg) & np.isfinite(t) & (t > 1e-12) & (t < far)
    if not hit.any():
        return None
    idx = np.nonzero(hit)[0]
    t_hit = t[idx]
    t_min = float(t_hit.min())
    window = t_hit <= t_min + 1e-9
    cand = idx[window]
    if instance_ids is None:
        best = int(cand.min())
        return float(t[best]), best
    inst = np.asarray(instance_ids)[cand]
    order = np.lexsort((cand, inst))
    best = int(cand[order[0]])
    return float(t[best]), int(np.asarray(instance_ids)[best])


# ---------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray = field(default_factory=lambda: vec3(0, 0, 1))
    vertical_fov_deg: float = 60.0
    width: int = 320
    height: int = 240
    near: float = 0.05
    far: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        if not (0.0 < self.near < self.far):
            raise ValueError("camera requires 0 < near < far")
        if not (0.0 < self.vertical_fov_deg < 180.0):
            raise ValueError("vertical fov must be in (0, 180) degrees")
        if norm(self.look_at - self.position) == 0.0:
            raise ValueError("camera position and look_at coincide")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) in world coordinates."""
        fwd = normalize(self.look_at - self.position)
        right = np.cross(fwd, self.up)
        n = norm(right)
        if n < 1e-12:  # looking straight along the up vector
            right = np.cross(fwd, vec3(0, 1, 0))
            n = norm(right)
        right = right / n
        return right, np.cross(right, fwd), fwd

    def tan_half_fov(self) -> tuple[float, float]:
        ty = math.tan(math.radians(self.vertical_fov_deg) * 0.5)
        return ty * self.width / self.height, ty

    def with_resolution(self, width: int, height: int) -> "Camera":
        return Camera(self.position, self.look_at, self.up, self.vertical_fov_deg,
                      width, height, self.near, self.far)


def project_point(cam: Camera, p: np.ndarray):
    """Perspective-project ``p`` to continuous pixel coordinates.

    Returns (x_pix, y_pix, view_depth) or None when ``p`` is nearer than the
    camera's near plane. Points outside the image rectangle still project.
    """
    right, up, fwd = cam.basis()
    rel = np.asarray(p, dtype=np.float64) - cam.position
    z = float(rel @ fwd)
    if z < cam.near:
        return None
    tx, ty = cam.tan_half_fov()
    x_ndc = float(rel @ right) / (z * tx)
    y_ndc = float(rel @ up) / (z * ty)
    return (0.5 * (x_ndc + 1.0) * cam.width,
            0.5 * (1.0 - y_ndc) * cam.height, z)


def unproject_pixel(cam: Camera, x_pix: float, y_pix: float, depth: float) -> np.ndarray:
    """World point whose projection is (x_pix, y_pix) at view depth ``depth``."""
    right, up, fwd = cam.basis()
    tx, ty = cam.tan_half_fov()
    x_ndc = 2.0 * x_pix / cam.width - 1.0
    y_ndc = 1.0 - 2.0 * y_pix / cam.height
    return cam.position + depth * (fwd + right * (x_ndc * tx) + up * (y_ndc * ty))


def point_in_frustum(cam: Camera, p: np.ndarray) -> bool:
    """True iff ``p`` projects inside the image rectangle with depth in [near, far]."""
    proj = project_point(cam, p)
    if proj is None:
        return False
    x, y, z = proj
    return (0.0 <= x <= cam.width and 0.0 <= y <= cam.height
            and cam.near <= z <= cam.far)


def pixel_ray_directions(cam: Camera) -> np.ndarray:
    """Unit ray directions through every pixel center, shape (H, W, 3)."""
    right, up, fwd = cam.basis()
    tx, ty = cam.tan_half_fov()
    xs = (2.0 * (np.arange(cam.width) + 0.5) / cam.width - 1.0) * tx
    ys = (1.0 - 2.0 * (np.arange(cam.height) + 0.5) / cam.height) * ty
    d = (fwd[None, None, :]
         + xs[None, :, None] * right[None, None, :]
         + ys[:, None, None] * up[None, None, :])
    return d / np.linalg.norm(d, axis=2, keepdims=True)
