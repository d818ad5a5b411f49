"""Triangle meshes: procedural primitives, OBJ ingestion, model catalog.

All catalog meshes are normalized so the model-space AABB is centered at the
origin with its largest dimension equal to 1 m; layout scale factors then mean
the same thing for every asset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Aabb


class ParseError(ValueError):
    """Malformed OBJ record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyMesh(ValueError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle soup: ``vertices`` (V, 3) float64, ``faces`` (F, 3) int32."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")
        if len(f) == 0:
            raise EmptyMesh("mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def aabb(self) -> Aabb:
        return Aabb.of_points(self.vertices)

    def triangles(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-corner vertex arrays (v0, v1, v2), each (F, 3)."""
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def area(self) -> float:
        v0, v1, v2 = self.triangles()
        return float(0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1).sum())

    def normalized(self) -> "TriangleMesh":
        """Center at the AABB midpoint and scale the largest extent to 1."""
        box = self.aabb()
        extent = float(box.size().max())
        if extent == 0.0:
            raise ValueError("degenerate mesh: zero extent")
        return TriangleMesh((self.vertices - box.center()) / extent, self.faces)


# ---------------------------------------------------------------------------
# OBJ subset: `v` and `f` records, polygons fan-triangulated


def load_obj(path) -> TriangleMesh:
    """Parse an OBJ file (v/f records only; normals and textures ignored)."""
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(line_no, f"vertex needs 3 coordinates: {line!r}")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError:
                    raise ParseError(line_no, f"bad vertex coordinate: {line!r}") from None
            elif tag == "f":
                idx = []
                for item in parts[1:]:
                    head = item.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ParseError(line_no, f"bad face index: {item!r}") from None
                    if i == 0:
                        raise ParseError(line_no, "face indices are 1-based, got 0")
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise ParseError(line_no, f"face needs at least 3 vertices: {line!r}")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    if not faces:
        raise EmptyMesh(f"no faces in {path}")
    arr_f = np.asarray(faces, dtype=np.int64)
    if arr_f.min() < 0 or arr_f.max() >= len(vertices):
        raise ParseError(0, "face index out of range")
    return TriangleMesh(np.asarray(vertices, dtype=np.float64), arr_f.astype(np.int32))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# procedural primitives (z is "up" in model space)


def make_box(width: float = 1.0, depth: float = 1.0, height: float = 1.0) -> TriangleMesh:
    hw, hd, hh = 0.5 * width, 0.5 * depth, 0.5 * height
    v = np.array([[x, y, z] for x in (-hw, hw) for y in (-hd, hd) for z in (-hh, hh)])
    # index layout from the corner loop: bit2 = x, bit1 = y, bit0 = z
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return TriangleMesh(v, np.asarray(faces, dtype=np.int32))


def make_sphere(radius: float = 0.5, n_lat: int = 8, n_lon: int = 12) -> TriangleMesh:
    verts = [[0.0, 0.0, radius]]
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append([radius * math.sin(theta) * math.cos(phi),
                          radius * math.sin(theta) * math.sin(phi),
                          radius * math.cos(theta)])
    verts.append([0.0, 0.0, -radius])
    top, bottom = 0, len(verts) - 1
    ring = lambda i: 1 + (i - 1) * n_lon
    faces = []
    for j in range(n_lon):
        faces.append([top, ring(1) + j, ring(1) + (j + 1) % n_lon])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i) + j, ring(i) + (j + 1) % n_lon
            c, d = ring(i + 1) + j, ring(i + 1) + (j + 1) % n_lon
            faces.append([a, c, b])
            faces.append([b, c, d])
    for j in range(n_lon):
        faces.append([bottom, ring(n_lat - 1) + (j + 1) % n_lon, ring(n_lat - 1) + j])
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int32))


def make_cone(radius: float = 0.5, height: float = 1.0, n_seg: int = 16) -> TriangleMesh:
    verts = [[0.0, 0.0, height * 0.5], [0.0, 0.0, -height * 0.5]]
    for j in range(n_seg):
        phi = 2.0 * math.pi * j / n_seg
        verts.append([radius * math.cos(phi), radius * math.sin(phi), -height * 0.5])
    faces = []
    for j in range(n_seg):
        a, b = 2 + j, 2 + (j + 1) % n_seg
        faces.append([0, a, b])   # side
        faces.append([1, b, a])   # base
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int32))


def make_torus(ring_radius: float = 0.35, tube_radius: float = 0.15,
               n_ring: int = 12, n_tube: int = 8) -> TriangleMesh:
    verts = []
    for i in range(n_ring):
        u = 2.0 * math.pi * i / n_ring
        cu, su = math.cos(u), math.sin(u)
        for j in range(n_tube):
            v = 2.0 * math.pi * j / n_tube
            r = ring_radius + tube_radius * math.cos(v)
            verts.append([r * cu, r * su, tube_radius * math.sin(v)])
    faces = []
    for i in range(n_ring):
        for j in range(n_tube):
            a = i * n_tube + j
            b = i * n_tube + (j + 1) % n_tube
            c = ((i + 1) % n_ring) * n_tube + j
            d = ((i + 1) % n_ring) * n_tube + (j + 1) % n_tube
            faces.append([a, c, b])
            faces.append([b, c, d])
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int32))


def make_capsule(radius: float = 0.3, cyl_height: float = 0.6,
                 n_lat: int = 4, n_lon: int = 10) -> TriangleMesh:
    """Cylinder with hemispherical caps, axis along z."""
    hh = 0.5 * cyl_height
    verts = [[0.0, 0.0, hh + radius]]
    rows = []
    for i in range(1, n_lat + 1):  # upper hemisphere rows, top to equator
        theta = 0.5 * math.pi * i / n_lat
        rows.append((radius * math.sin(theta), hh + radius * math.cos(theta)))
    for i in range(n_lat, 0, -1):  # lower equator down to the ring above the pole
        theta = 0.5 * math.pi * i / n_lat
        rows.append((radius * math.sin(theta), -hh - radius * math.cos(theta)))
    for r, z in rows:
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append([r * math.cos(phi), r * math.sin(phi), z])
    verts.append([0.0, 0.0, -hh - radius])
    top, bottom = 0, len(verts) - 1
    ring = lambda i: 1 + i * n_lon
    faces = []
    for j in range(n_lon):
        faces.append([top, ring(0) + j, ring(0) + (j + 1) % n_lon])
    for i in range(len(rows) - 1):
        for j in range(n_lon):
            a, b = ring(i) + j, ring(i) + (j + 1) % n_lon
            c, d = ring(i + 1) + j, ring(i + 1) + (j + 1) % n_lon
            faces.append([a, c, b])
            faces.append([b, c, d])
    last = len(rows) - 1
    for j in range(n_lon):
        faces.append([bottom, ring(last) + (j + 1) % n_lon, ring(last) + j])
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int32))


# ---------------------------------------------------------------------------
# model catalog


@dataclass
class ModelCatalog:
    """model_id -> normalized TriangleMesh, in a fixed insertion order."""

    meshes: dict[str, TriangleMesh] = field(default_factory=dict)

    def add(self, model_id: str, mesh: TriangleMesh) -> None:
        if model_id in self.meshes:
            raise ValueError(f"duplicate model id {model_id!r}")
        self.meshes[model_id] = mesh.normalized()

    def ids(self) -> list[str]:
        return list(self.meshes.keys())

    def __getitem__(self, model_id: str) -> TriangleMesh:
        return self.meshes[model_id]

    def __len__(self) -> int:
        return len(self.meshes)


def default_catalog() -> ModelCatalog:
    """25 parameterized primitive shapes; fixed parameters, fully reproducible."""
    cat = ModelCatalog()
    boxes = [(1.0, 1.0, 1.0), (1.0, 0.6, 0.4), (1.0, 1.0, 0.25),
             (0.5, 0.5, 1.0), (1.0, 0.3, 0.9), (0.8, 0.8, 0.5)]
    for i, (w, d, h) in enumerate(boxes):
        cat.add(f"box_{i:02d}", make_box(w, d, h))
    spheres = [(0.5, 8, 12), (0.5, 6, 9), (0.5, 10, 16), (0.5, 5, 8)]
    for i, (r, la, lo) in enumerate(spheres):
        cat.add(f"sphere_{i:02d}", make_sphere(r, la, lo))
    cones = [(0.5, 1.0, 16), (0.3, 1.0, 12), (0.5, 0.5, 10),
             (0.45, 0.8, 20), (0.25, 0.9, 8)]
    for i, (r, h, n) in enumerate(cones):
        cat.add(f"cone_{i:02d}", make_cone(r, h, n))
    tori = [(0.35, 0.15, 12, 8), (0.4, 0.1, 14, 6), (0.3, 0.2, 10, 8),
            (0.38, 0.12, 16, 6), (0.32, 0.17, 8, 6)]
    for i, (rr, tr, nr, nt) in enumerate(tori):
        cat.add(f"torus_{i:02d}", make_torus(rr, tr, nr, nt))
    capsules = [(0.3, 0.6, 4, 10), (0.25, 0.9, 3, 8), (0.4, 0.3, 4, 12),
                (0.2, 1.0, 3, 8), (0.35, 0.5, 5, 10)]
    for i, (r, h, la, lo) in enumerate(capsules):
        cat.add(f"capsule_{i:02d}", make_capsule(r, h, la, lo))
    return cat


def catalog_from_obj_dir(path) -> ModelCatalog:
    """All ``*.obj`` files under ``path`` (sorted by name) as one catalog."""
    import os

    cat = ModelCatalog()
    names = sorted(n for n in os.listdir(path) if n.lower().endswith(".obj"))
    if not names:
        raise FileNotFoundError(f"no .obj files in {path}")
    for name in names:
        cat.add(os.path.splitext(name)[0], load_obj(os.path.join(path, name)))
    return cat
