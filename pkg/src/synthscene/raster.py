"""Software z-buffer rasterizer producing per-pixel instance labels and depth.

Two independent renderers share one selection rule so their label output is
pixel-identical:

  * ``rasterize``     — edge-function coverage of projected (near-clipped)
                        triangles; per-pixel depth from the triangle's plane
                        equation along the pixel-center ray
  * ``raycast_labels``— per-pixel Moller-Trumbore ray casting in world space

Selection rule, applied per pixel and independent of triangle order: take the
minimum view depth over all covering triangles, then among candidates within
DEPTH_TIE_EPS of that minimum pick the lowest (instance id, triangle index).
Label 0 is the background shell, which writes depth but no instance id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Camera, pixel_ray_directions

DEPTH_TIE_EPS = 1e-9

_NO_KEY = np.iinfo(np.int64).max


@dataclass(frozen=True)
class LabelBuffer:
    """Per-pixel instance ids (0 = background) and view-space depth in meters."""

    width: int
    height: int
    labels: np.ndarray  # (H, W) int32
    depth: np.ndarray   # (H, W) float64, +inf where nothing was hit

    def pixel_counts(self, n_instances: int) -> np.ndarray:
        """Pixel count per label, shape (n_instances + 1,); index 0 is background."""
        return np.bincount(self.labels.ravel(), minlength=n_instances + 1)


@dataclass(frozen=True)
class MaskPair:
    """Visible-pixel count n_p and everyone-else-hidden count n_f for one instance."""

    instance_id: int
    n_p: int
    n_f: int

    def __post_init__(self):
        if not (0 <= self.n_p <= self.n_f or self.n_f == 0 and self.n_p == 0):
            raise ValueError(f"mask counts violate n_p <= n_f: {self}")


class SceneGeometry:
    """World-space triangle soup of a scene with per-label slices.

    Label 0 covers the background shell; instance k (1-based, scene order)
    covers that instance's transformed mesh. Slicing keeps the global triangle
    indices stable so hide-subsets select the same tie-break keys.
    """

    def __init__(self, v0, v1, v2, labels, slices):
        self.v0 = v0
        self.v1 = v1
        self.v2 = v2
        self.labels = labels          # (T,) int32
        self.slices = slices          # label -> (start, end)
        self.n_instances = len(slices) - 1

    @staticmethod
    def from_scene(scene) -> "SceneGeometry":
        chunks_v0, chunks_v1, chunks_v2 = [], [], []
        labels, slices = [], []
        start = 0

        def add(mesh_tris, label):
            nonlocal start
            t0, t1, t2 = mesh_tris
            chunks_v0.append(t0)
            chunks_v1.append(t1)
            chunks_v2.append(t2)
            labels.append(np.full(len(t0), label, dtype=np.int32))
            slices.append((start, start + len(t0)))
            start += len(t0)

        if scene.background is not None:
            add(scene.background.mesh.triangles(), 0)
        else:
            empty = np.zeros((0, 3))
            add((empty, empty, empty), 0)
        for k, inst in enumerate(scene.instances, start=1):
            verts = inst.rotation.apply(inst.mesh.vertices * inst.scale) + inst.translation
            f = inst.mesh.faces
            add((verts[f[:, 0]], verts[f[:, 1]], verts[f[:, 2]]), k)
        return SceneGeometry(np.concatenate(chunks_v0), np.concatenate(chunks_v1),
                             np.concatenate(chunks_v2), np.concatenate(labels), slices)

    def subset(self, hide=frozenset()):
        """(v0, v1, v2, labels, global_tri_index) excluding hidden instance ids."""
        if not hide:
            return self.v0, self.v1, self.v2, self.labels, np.arange(len(self.labels))
        keep = ~np.isin(self.labels, list(hide))
        idx = np.nonzero(keep)[0]
        return self.v0[idx], self.v1[idx], self.v2[idx], self.labels[idx], idx


class _CameraGrid:
    """Per-camera arrays shared by both renderers (the common ray inputs)."""

    def __init__(self, cam: Camera):
        self.cam = cam
        self.right, self.up, self.fwd = cam.basis()
        self.tx, self.ty = cam.tan_half_fov()
        self.dirs = pixel_ray_directions(cam)            # (H, W, 3) unit
        self.cos_fwd = self.dirs @ self.fwd              # (H, W)
        self.centers_x = np.arange(cam.width) + 0.5
        self.centers_y = np.arange(cam.height) + 0.5


def _select_labels(shape, candidates):
    """Order-independent two-pass winner selection shared by both renderers.

    ``candidates`` is an iterable of (flat_pixel_idx, depth, key) tuples, one
    per triangle, where ``key`` = instance_id * stride + global_tri_index.
    """
    zbuf = np.full(shape[0] * shape[1], np.inf)
    for flat, z, _key in candidates:
        if len(flat):
            np.minimum.at(zbuf, flat, z)
    keybuf = np.full(shape[0] * shape[1], _NO_KEY, dtype=np.int64)
    for flat, z, key in candidates:
        if not len(flat):
            continue
        win = z <= zbuf[flat] + DEPTH_TIE_EPS
        np.minimum.at(keybuf, flat[win], key)
    return zbuf.reshape(shape), keybuf.reshape(shape)


def _finish(grid: _CameraGrid, zbuf, keybuf, stride) -> LabelBuffer:
    labels = np.where(keybuf != _NO_KEY, keybuf // stride, 0).astype(np.int32)
    return LabelBuffer(grid.cam.width, grid.cam.height, labels, zbuf)


# ---------------------------------------------------------------------------
# renderer 1: projected-triangle edge functions


def _clip_near(verts, z, near):
    """Sutherland-Hodgman clip of a polygon against view depth z >= near."""
    out_v, out_z = [], []
    n = len(verts)
    for i in range(n):
        a, za = verts[i], z[i]
        b, zb = verts[(i + 1) % n], z[(i + 1) % n]
        a_in, b_in = za >= near, zb >= near
        if a_in:
            out_v.append(a)
            out_z.append(za)
        if a_in != b_in:
            s = (near - za) / (zb - za)
            out_v.append(a + s * (b - a))
            out_z.append(near)
    return out_v, out_z


def _raster_candidates(v0, v1, v2, inst, gidx, grid: _CameraGrid, stride):
    cam = grid.cam
    pos = cam.position
    w, h = cam.width, cam.height
    far = cam.far
    if len(v0) == 0:
        return []

    # batched per-triangle setup: view depths, projections, plane equations
    rel = np.stack([v0 - pos, v1 - pos, v2 - pos], axis=1)   # (T, 3 verts, 3)
    zv = rel @ grid.fwd                                      # (T, 3)
    front = zv >= cam.near
    any_front = front.any(axis=1)
    all_front = front.all(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        px_all = ((rel @ grid.right) / (zv * grid.tx) + 1.0) * (0.5 * w)
        py_all = (1.0 - (rel @ grid.up) / (zv * grid.ty)) * (0.5 * h)
    nrm_all = np.cross(v1 - v0, v2 - v0)                     # (T, 3)
    num_all = np.einsum("ij,ij->i", v0 - pos, nrm_all)       # (T,)
    keys = inst.astype(np.int64) * stride + gidx

    cands = []
    errstate = np.errstate(divide="ignore", invalid="ignore")
    with errstate:
        for k in np.flatnonzero(any_front):
            if all_front[k]:
                px, py = px_all[k], py_all[k]
                n_poly = 3
            else:
                tri = [v0[k], v1[k], v2[k]]
                poly, zp = _clip_near(tri, list(zv[k]), cam.near)
                n_poly = len(poly)
                if n_poly < 3:
                    continue
                rp = np.asarray(poly) - pos
                zp = np.asarray(zp)
                px = ((rp @ grid.right) / (zp * grid.tx) + 1.0) * (0.5 * w)
                py = (1.0 - (rp @ grid.up) / (zp * grid.ty)) * (0.5 * h)
            ix_lo = max(0, int(np.ceil(px.min() - 0.5)))
            ix_hi = min(w - 1, int(np.floor(px.max() - 0.5)))
            iy_lo = max(0, int(np.ceil(py.min() - 0.5)))
            iy_hi = min(h - 1, int(np.floor(py.max() - 0.5)))
            if ix_lo > ix_hi or iy_lo > iy_hi:
                continue
            cx = grid.centers_x[ix_lo:ix_hi + 1]
            cy = grid.centers_y[iy_lo:iy_hi + 1]
            inside = None
            for j in range(1, n_poly - 1):  # fan over the convex clipped polygon
                ax, ay = px[0], py[0]
                bx, by = px[j], py[j]
                qx, qy = px[j + 1], py[j + 1]
                e0 = (bx - ax) * (cy - ay)[:, None] - (by - ay) * (cx - ax)[None, :]
                e1 = (qx - bx) * (cy - by)[:, None] - (qy - by) * (cx - bx)[None, :]
                e2 = (ax - qx) * (cy - qy)[:, None] - (ay - qy) * (cx - qx)[None, :]
                hit = (np.minimum(np.minimum(e0, e1), e2) >= 0) \
                    | (np.maximum(np.maximum(e0, e1), e2) <= 0)
                inside = hit if inside is None else (inside | hit)
            if not inside.any():
                continue
            # depth at covered pixel centers from the *unclipped* triangle's plane
            d_local = grid.dirs[iy_lo:iy_hi + 1, ix_lo:ix_hi + 1]
            zpix = (num_all[k] / (d_local @ nrm_all[k])) \
                * grid.cos_fwd[iy_lo:iy_hi + 1, ix_lo:ix_hi + 1]
            valid = inside & np.isfinite(zpix) & (zpix > 0) & (zpix <= far)
            if not valid.any():
                continue
            yy, xx = np.nonzero(valid)
            flat = (yy + iy_lo) * w + (xx + ix_lo)
            cands.append((flat, zpix[valid], int(keys[k])))
    return cands


def rasterize(scene_or_geom, camera: Camera | None = None, hide=frozenset(),
              resolution: tuple[int, int] | None = None) -> LabelBuffer:
    """Render instance labels and depth with a perspective z-buffer.

    ``hide`` is a set of instance ids excluded from the pass (the background,
    id 0, cannot be hidden). ``resolution`` overrides the camera's (w, h).
    """
    geom, cam = _norm_args(scene_or_geom, camera, resolution)
    grid = _CameraGrid(cam)
    stride = len(geom.labels) + 1
    cands = _raster_candidates(*geom.subset(frozenset(hide)), grid, stride)
    zbuf, keybuf = _select_labels((cam.height, cam.width), cands)
    return _finish(grid, zbuf, keybuf, stride)


# ---------------------------------------------------------------------------
# renderer 2: per-pixel ray casting (the oracle)


def _raycast_candidates(v0, v1, v2, inst, gidx, grid: _CameraGrid, stride):
    cam = grid.cam
    dirs = grid.dirs.reshape(-1, 3)
    cosf = grid.cos_fwd.ravel()
    pos = cam.position
    cands = []
    for k in range(len(v0)):
        e1 = v1[k] - v0[k]
        e2 = v2[k] - v0[k]
        s = pos - v0[k]
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        u_num = pvec @ s
        qvec = np.cross(s, e1)
        v_num = dirs @ qvec
        t_num = float(e2 @ qvec)
        inside = ((det > 0) & (u_num >= 0) & (v_num >= 0) & (u_num + v_num <= det)) | \
                 ((det < 0) & (u_num <= 0) & (v_num <= 0) & (u_num + v_num >= det))
        if not inside.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (t_num / det) * cosf
        valid = inside & np.isfinite(z) & (z >= cam.near) & (z <= cam.far)
        if not valid.any():
            continue
        flat = np.nonzero(valid)[0]
        cands.append((flat, z[valid], int(inst[k]) * stride + int(gidx[k])))
    return cands


def raycast_labels(scene_or_geom, camera: Camera | None = None, hide=frozenset(),
                   resolution: tuple[int, int] | None = None) -> LabelBuffer:
    """Per-pixel nearest-hit ray casting; the independent check on ``rasterize``."""
    geom, cam = _norm_args(scene_or_geom, camera, resolution)
    grid = _CameraGrid(cam)
    stride = len(geom.labels) + 1
    cands = _raycast_candidates(*geom.subset(frozenset(hide)), grid, stride)
    zbuf, keybuf = _select_labels((cam.height, cam.width), cands)
    return _finish(grid, zbuf, keybuf, stride)


# ---------------------------------------------------------------------------
# mask pairs (the occlusion-metric ingredients)


def mask_pairs(scene, resolution: tuple[int, int] | None = None,
               geom: SceneGeometry | None = None) -> list[MaskPair]:
    """Per-instance (n_p, n_f): visible pixels with everything present vs with
    all *other* instances hidden (background always kept)."""
    if geom is None:
        geom = SceneGeometry.from_scene(scene)
    cam = scene.camera
    if resolution is not None:
        cam = cam.with_resolution(*resolution)
    grid = _CameraGrid(cam)
    stride = len(geom.labels) + 1
    shape = (cam.height, cam.width)

    full = _select_labels(shape, _raster_candidates(*geom.subset(), grid, stride))
    full_buf = _finish(grid, *full, stride)
    n_p = full_buf.pixel_counts(geom.n_instances)

    pairs = []
    all_ids = set(range(1, geom.n_instances + 1))
    for k in range(1, geom.n_instances + 1):
        sub = geom.subset(frozenset(all_ids - {k}))
        zbuf, keybuf = _select_labels(shape, _raster_candidates(*sub, grid, stride))
        solo = _finish(grid, zbuf, keybuf, stride)
        n_f = int(np.count_nonzero(solo.labels == k))
        pairs.append(MaskPair(k, int(n_p[k]), n_f))
    return pairs


def _norm_args(scene_or_geom, camera, resolution):
    if isinstance(scene_or_geom, SceneGeometry):
        geom = scene_or_geom
        if camera is None:
            raise ValueError("camera required when passing SceneGeometry")
        cam = camera
    else:
        geom = SceneGeometry.from_scene(scene_or_geom)
        cam = camera if camera is not None else scene_or_geom.camera
    if resolution is not None:
        cam = cam.with_resolution(*resolution)
    return geom, cam


# ---------------------------------------------------------------------------
# buffer file formats


def write_pgm16(buffer_labels: np.ndarray, path) -> None:
    """16-bit binary PGM (P5, maxval 65535, big-endian sample values)."""
    arr = np.asarray(buffer_labels)
    if arr.min() < 0 or arr.max() > 65535:
        raise ValueError("labels out of 16-bit range")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(arr.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:  # magic, width, height, maxval
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise ValueError(f"not a 16-bit P5 PGM: {path}")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(data, dtype=">u2", count=w * h, offset=pos).reshape(h, w).astype(np.int32)


def write_depth_raw(depth: np.ndarray, path) -> None:
    """Raw float32 little-endian with an 8-byte (width, height) uint32 header."""
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(np.array([w, h], dtype="<u4").tobytes())
        fh.write(np.asarray(depth, dtype="<f4").tobytes())


def read_depth_raw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    w, h = np.frombuffer(data, dtype="<u4", count=2)
    return np.frombuffer(data, dtype="<f4", count=int(w) * int(h),
                         offset=8).reshape(int(h), int(w)).astype(np.float64)
