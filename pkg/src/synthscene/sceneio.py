"""Scene/manifest/metrics serialization and the dataset generation pipeline.

All JSON goes through the canonical writer (fixed key order, 17-significant-
digit floats), so exporting the same data twice is byte-identical, and
``--jobs k`` produces the same bytes as ``--jobs 1``: workers only compute,
the parent writes everything in scene-index order.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import Camera, Rotation, vec3
from .jsonutil import dumps_canonical, format_float
from .metrics import ProxyMetrics, ScaleThresholds, classify_scale, scene_stats
from .mesh import ModelCatalog, catalog_from_obj_dir, default_catalog
from .raster import mask_pairs, rasterize, write_depth_raw, write_pgm16
from .scene import (BackgroundShell, LayoutParams, ObjectInstance,
                    PlacementExhausted, Scene, assemble_scene, query_poses)

FORMAT_VERSION = "1"


# ---------------------------------------------------------------------------
# scene <-> dict


def camera_to_dict(cam: Camera) -> dict:
    return {
        "position": [float(x) for x in cam.position],
        "look_at": [float(x) for x in cam.look_at],
        "up": [float(x) for x in cam.up],
        "vertical_fov_deg": float(cam.vertical_fov_deg),
        "width": int(cam.width),
        "height": int(cam.height),
        "near": float(cam.near),
        "far": float(cam.far),
    }


def camera_from_dict(d: dict) -> Camera:
    return Camera(np.asarray(d["position"]), np.asarray(d["look_at"]),
                  np.asarray(d["up"]), float(d["vertical_fov_deg"]),
                  int(d["width"]), int(d["height"]), float(d["near"]), float(d["far"]))


def three_point_lights(scene: Scene) -> dict:
    """Key/fill/back light positions derived from the anchor instance's box.

    Positions are deterministic functions of the anchor AABB and the camera
    basis; energies are fixed. Shading itself is out of scope here: the spec
    exists so external renderers can light the exported layout.
    """
    anchor = scene.instances[scene.light_anchor]
    center = anchor.world_aabb.center()
    radius = max(0.25, float(np.linalg.norm(anchor.world_aabb.size()) * 0.5))
    right, _up, fwd = scene.camera.basis()
    z = vec3(0.0, 0.0, 1.0)

    def light(direction, dist, energy):
        d = direction / np.linalg.norm(direction)
        return {"position": [float(x) for x in center + dist * d],
                "energy": float(energy)}

    return {
        "key": light(-fwd + right + z, 2.5 * radius, 1.0),
        "fill": light(-fwd - right + 0.3 * z, 3.0 * radius, 0.5),
        "back": light(fwd + 0.5 * z, 2.5 * radius, 0.75),
    }


def scene_to_dict(scene: Scene) -> dict:
    background = None
    if scene.background is not None:
        background = {"kind": scene.background.kind,
                      "extents": [float(x) for x in scene.background.extents]}
    return {
        "format_version": FORMAT_VERSION,
        "seed": int(scene.seed),
        "scene_index": int(scene.scene_index),
        "params_digest": scene.params_digest,
        "background": background,
        "camera": camera_to_dict(scene.camera),
        "instances": [{
            "model_id": inst.model_id,
            "translation": [float(x) for x in inst.translation],
            "rotation_wxyz": [float(inst.rotation.w), float(inst.rotation.x),
                              float(inst.rotation.y), float(inst.rotation.z)],
            "scale": float(inst.scale),
        } for inst in scene.instances],
        "light_anchor": int(scene.light_anchor),
        "lights": three_point_lights(scene) if scene.instances else None,
    }


def scene_from_dict(d: dict, catalog: ModelCatalog) -> Scene:
    bg = None
    if d["background"] is not None:
        kind = d["background"]["kind"]
        w, dd, h = d["background"]["extents"]
        bg = (BackgroundShell.white_cube(w) if kind == "white_cube"
              else BackgroundShell.room_shell(w, dd, h))
    instances = tuple(
        ObjectInstance(r["model_id"], catalog[r["model_id"]],
                       np.asarray(r["translation"]),
                       Rotation(*r["rotation_wxyz"]), float(r["scale"]))
        for r in d["instances"])
    return Scene(bg, instances, camera_from_dict(d["camera"]),
                 int(d["light_anchor"]), int(d["seed"]),
                 int(d["scene_index"]), d["params_digest"])


def export_scene(scene: Scene, path) -> None:
    _write_text(path, dumps_canonical(scene_to_dict(scene)) + "\n")


def load_scene(path, catalog: ModelCatalog) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh), catalog)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# metric / report / trace files


def write_metrics_json(metrics: ProxyMetrics, path) -> None:
    _write_text(path, dumps_canonical(metrics.to_dict()) + "\n")


def write_viewpoint_csv(metrics: ProxyMetrics, path) -> None:
    lines = ["azimuth_bin,elevation_bin,count"]
    hist = metrics.viewpoint_hist
    for az in range(hist.shape[0]):
        for el in range(hist.shape[1]):
            lines.append(f"{az},{el},{int(hist[az, el])}")
    _write_text(path, "\n".join(lines) + "\n")


def write_loss_csv(losses, path) -> None:
    lines = ["step,mean_loss"]
    for step, loss in enumerate(losses):
        lines.append(f"{step},{format_float(float(loss))}")
    _write_text(path, "\n".join(lines) + "\n")


def write_search_report(report, path) -> None:
    _write_text(path, dumps_canonical(report.to_dict()) + "\n")


# ---------------------------------------------------------------------------
# manifest records


def mask_bbox(labels: np.ndarray, instance_id: int):
    """Tight inclusive pixel bounds [x_min, y_min, x_max, y_max] of a mask."""
    ys, xs = np.nonzero(labels == instance_id)
    if len(ys) == 0:
        return None
    return [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())]


def query_pose_records(catalog: ModelCatalog, model_ids=None) -> list[dict]:
    records = []
    for model_id in (model_ids if model_ids is not None else catalog.ids()):
        poses = query_poses(catalog[model_id], model_id)
        records.append({
            "model_id": model_id,
            "poses": [{
                "yaw_deg": float(45.0 * k),
                "rotation_wxyz": [float(cam_inst[1].rotation.w), float(cam_inst[1].rotation.x),
                                  float(cam_inst[1].rotation.y), float(cam_inst[1].rotation.z)],
                "camera": camera_to_dict(cam_inst[0]),
            } for k, cam_inst in enumerate(poses)],
        })
    return records


# ---------------------------------------------------------------------------
# dataset generation pipeline


@dataclass(frozen=True)
class _SceneArtifacts:
    index: int
    scene_json: str
    pgm_bytes: bytes
    depth_bytes: bytes
    record: dict


_WORKER_CTX: dict = {}


def _catalog_from_source(source) -> ModelCatalog:
    kind, arg = source
    if kind == "default":
        return default_catalog()
    if kind == "obj_dir":
        return catalog_from_obj_dir(arg)
    raise ValueError(f"unknown catalog source {source!r}")


def _init_worker(params_dict, resolution, catalog_source):
    _WORKER_CTX["params"] = LayoutParams.from_dict(params_dict)
    _WORKER_CTX["resolution"] = resolution
    _WORKER_CTX["catalog"] = _catalog_from_source(catalog_source)


def _build_one(index: int) -> _SceneArtifacts:
    params: LayoutParams = _WORKER_CTX["params"]
    resolution = _WORKER_CTX["resolution"]
    catalog: ModelCatalog = _WORKER_CTX["catalog"]
    thresholds = ScaleThresholds.for_resolution(*resolution)

    try:
        scene = assemble_scene(params, catalog, scene_index=index)
    except PlacementExhausted as e:
        # rare (crowded/unlucky layouts); recorded, not fatal to the dataset
        return _SceneArtifacts(index, None, None, None, {
            "scene_index": index, "seed": int(params.seed),
            "failed": str(e), "instances": []})
    buffer = rasterize(scene, resolution=resolution)
    pairs = mask_pairs(scene, resolution=resolution)

    inst_records = []
    for pair in pairs:
        inst = scene.instances[pair.instance_id - 1]
        inst_records.append({
            "instance_id": pair.instance_id,
            "model_id": inst.model_id,
            "n_p": pair.n_p,
            "n_f": pair.n_f,
            "scale_class": classify_scale(pair.n_p, thresholds),
            "bbox_2d": mask_bbox(buffer.labels, pair.instance_id),
        })
    name = f"scene_{index:05d}"
    record = {
        "scene_index": index,
        "seed": int(params.seed),
        "path": f"scenes/{name}.json",
        "label_path": f"labels/{name}.pgm",
        "depth_path": f"depth/{name}.raw",
        "instances": inst_records,
    }
    import io

    pgm = io.BytesIO()
    h, w = buffer.labels.shape
    pgm.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
    pgm.write(buffer.labels.astype(">u2").tobytes())
    depth = io.BytesIO()
    depth.write(np.array([w, h], dtype="<u4").tobytes())
    depth.write(buffer.depth.astype("<f4").tobytes())
    return _SceneArtifacts(index, dumps_canonical(scene_to_dict(scene)) + "\n",
                           pgm.getvalue(), depth.getvalue(), record)


def generate_dataset(params: LayoutParams, count: int, out_dir,
                     catalog_source=("default", None),
                     resolution: tuple[int, int] | None = None,
                     jobs: int = 1, write_depth: bool = True) -> dict:
    """Assemble, rasterize, and export ``count`` scenes plus a manifest.

    Returns the manifest dict. Deterministic given (params, count): workers
    compute per-scene artifacts in parallel, the parent writes them in order.
    """
    resolution = resolution or (params.image_width, params.image_height)
    for sub in ("scenes", "labels", "depth" if write_depth else None):
        if sub:
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    if jobs <= 1:
        _init_worker(params.to_dict(), resolution, catalog_source)
        artifacts = [_build_one(i) for i in range(count)]
    else:
        with ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(params.to_dict(), resolution, catalog_source)) as pool:
            artifacts = list(pool.map(_build_one, range(count)))
    artifacts.sort(key=lambda a: a.index)

    catalog = _catalog_from_source(catalog_source)
    used = sorted({r["model_id"] for a in artifacts for r in a.record["instances"]})
    manifest = {
        "format_version": FORMAT_VERSION,
        "params": params.to_dict(),
        "params_digest": params.digest(),
        "count": count,
        "resolution": [resolution[0], resolution[1]],
        "scale_thresholds": {
            "small_max_area": float(ScaleThresholds.for_resolution(*resolution).small_max_area),
            "medium_max_area": float(ScaleThresholds.for_resolution(*resolution).medium_max_area),
        },
        "scenes": [a.record for a in artifacts],
        "query_poses": query_pose_records(catalog, used),
    }

    for a in artifacts:
        if a.scene_json is None:
            continue
        _write_text(os.path.join(out_dir, a.record["path"]), a.scene_json)
        with open(os.path.join(out_dir, a.record["label_path"]), "wb") as fh:
            fh.write(a.pgm_bytes)
        if write_depth:
            with open(os.path.join(out_dir, a.record["depth_path"]), "wb") as fh:
                fh.write(a.depth_bytes)
    _write_text(os.path.join(out_dir, "manifest.json"), dumps_canonical(manifest) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# dataset analysis pipeline


def _analyze_init(catalog_source, resolution):
    _WORKER_CTX["catalog"] = _catalog_from_source(catalog_source)
    _WORKER_CTX["resolution"] = resolution


def _analyze_one(path):
    catalog = _WORKER_CTX["catalog"]
    resolution = _WORKER_CTX["resolution"]
    scene = load_scene(path, catalog)
    res = resolution or (scene.camera.width, scene.camera.height)
    return scene_stats(scene, resolution=res,
                       thresholds=ScaleThresholds.for_resolution(*res))


def analyze_dataset(scene_dir, catalog_source=("default", None),
                    resolution: tuple[int, int] | None = None,
                    jobs: int = 1) -> ProxyMetrics:
    """Re-rasterize every exported scene and aggregate the proxy metrics."""
    from .metrics import MetricsAccumulator

    sub = os.path.join(scene_dir, "scenes")
    root = sub if os.path.isdir(sub) else scene_dir
    paths = sorted(os.path.join(root, n) for n in os.listdir(root)
                   if n.endswith(".json") and n.startswith("scene_"))
    if not paths:
        raise FileNotFoundError(f"no scene_*.json files under {scene_dir}")
    if jobs <= 1:
        _analyze_init(catalog_source, resolution)
        stats = [_analyze_one(p) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_analyze_init,
                                 initargs=(catalog_source, resolution)) as pool:
            stats = list(pool.map(_analyze_one, paths))
    acc = MetricsAccumulator()
    for s in stats:  # merge in path order: identical result for any job count
        acc.add(s)
    return acc.finalize()
