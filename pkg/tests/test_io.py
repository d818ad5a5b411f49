import json
import math

import numpy as np
import pytest

from synthscene.jsonutil import dumps_canonical, format_float
from synthscene.mesh import default_catalog
from synthscene.metrics import ScaleThresholds, classify_scale
from synthscene.raster import mask_pairs, rasterize
from synthscene.scene import LayoutParams, Scene, assemble_scene
from synthscene.sceneio import (analyze_dataset, export_scene, generate_dataset,
                                load_scene, mask_bbox, scene_from_dict,
                                scene_to_dict, three_point_lights,
                                write_loss_csv, write_viewpoint_csv)

CATALOG = default_catalog()


class TestCanonicalJson:
    def test_float_17_digits_roundtrip(self):
        vals = [0.1, 1 / 3, 2.0, 1e-17, 123456.789, -math.pi, 5e300]
        for v in vals:
            assert float(format_float(v)) == v
        s = dumps_canonical({"a": 1 / 3})
        assert json.loads(s)["a"] == 1 / 3

    def test_key_order_preserved(self):
        assert dumps_canonical({"b": 1, "a": 2}) == '{"b": 1, "a": 2}'

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            dumps_canonical({"x": float("nan")})

    def test_escapes(self):
        assert dumps_canonical({"s": 'a"b\n'}) == '{"s": "a\\"b\\n"}'


class TestSceneRoundTrip:
    def test_export_import_field_for_field(self, tmp_path):
        scene = assemble_scene(LayoutParams(seed=70, target_object_count=6), CATALOG)
        path = tmp_path / "scene.json"
        export_scene(scene, path)
        back = load_scene(path, CATALOG)
        assert scene_to_dict(back) == scene_to_dict(scene)

    def test_double_export_byte_identical(self, tmp_path):
        scene = assemble_scene(LayoutParams(seed=71, target_object_count=5), CATALOG)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        export_scene(scene, p1)
        export_scene(scene, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_reimported_scene_rasterizes_identically(self, tmp_path):
        scene = assemble_scene(LayoutParams(seed=72, target_object_count=5), CATALOG)
        path = tmp_path / "scene.json"
        export_scene(scene, path)
        back = load_scene(path, CATALOG)
        a = rasterize(scene, resolution=(80, 60))
        b = rasterize(back, resolution=(80, 60))
        assert np.array_equal(a.labels, b.labels)

    def test_lights_are_deterministic_and_anchored(self):
        scene = assemble_scene(LayoutParams(seed=73, target_object_count=4), CATALOG)
        l1 = three_point_lights(scene)
        l2 = three_point_lights(scene)
        assert l1 == l2
        anchor = scene.instances[scene.light_anchor]
        c = anchor.world_aabb.center()
        r = max(0.25, float(np.linalg.norm(anchor.world_aabb.size()) * 0.5))
        for name in ("key", "fill", "back"):
            d = np.linalg.norm(np.asarray(l1[name]["position"]) - c)
            assert d <= 3.0 * r + 1e-9


class TestIndependentReader:
    def test_exported_camera_reprojects_silhouettes(self, tmp_path):
        """Rebuild the projection from the JSON alone (plain dict math, no
        package camera code) and check it reproduces mask extents within 1 px."""
        params = LayoutParams(seed=74, target_object_count=3,
                              image_width=320, image_height=240)
        scene = assemble_scene(params, CATALOG, scene_index=1)
        path = tmp_path / "scene.json"
        export_scene(scene, path)
        doc = json.loads(path.read_text())

        cam = doc["camera"]
        pos = np.array(cam["position"])
        fwd = np.array(cam["look_at"]) - pos
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.array(cam["up"]))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        ty = math.tan(math.radians(cam["vertical_fov_deg"]) / 2)
        tx = ty * cam["width"] / cam["height"]

        def project(p):
            rel = p - pos
            z = rel @ fwd
            return ((rel @ right) / (z * tx) + 1) * cam["width"] / 2, \
                   (1 - (rel @ up) / (z * ty)) * cam["height"] / 2

        def quat_matrix(w, x, y, z):
            return np.array([
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])

        buf = rasterize(scene)
        pairs = mask_pairs(scene)
        for rec, pair in zip(doc["instances"], pairs):
            if pair.n_p == 0 or pair.n_p != pair.n_f:
                continue  # compare unoccluded instances only
            mesh = CATALOG[rec["model_id"]]
            rot = quat_matrix(*rec["rotation_wxyz"])
            world = mesh.vertices * rec["scale"] @ rot.T + np.array(rec["translation"])
            px, py = zip(*(project(p) for p in world))
            bbox = mask_bbox(buf.labels, pair.instance_id)
            # bbox holds pixel indices; covered pixel centers sit at index+0.5
            assert abs(bbox[0] + 0.5 - min(px)) <= 1.0
            assert abs(bbox[1] + 0.5 - min(py)) <= 1.0
            assert abs(bbox[2] + 0.5 - max(px)) <= 1.0
            assert abs(bbox[3] + 0.5 - max(py)) <= 1.0


class TestGenerateDataset:
    def test_manifest_bboxes_match_masks(self, tmp_path):
        params = LayoutParams(seed=75, target_object_count=5,
                              image_width=96, image_height=72)
        manifest = generate_dataset(params, 3, tmp_path)
        from synthscene.raster import read_pgm16

        for rec in manifest["scenes"]:
            labels = read_pgm16(tmp_path / rec["label_path"])
            for inst in rec["instances"]:
                expected = mask_bbox(labels, inst["instance_id"])
                assert inst["bbox_2d"] == expected
                if expected is not None:
                    x0, y0, x1, y1 = expected
                    assert 0 <= x0 <= x1 < 96 and 0 <= y0 <= y1 < 72
                n_p = int(np.count_nonzero(labels == inst["instance_id"]))
                assert inst["n_p"] == n_p
                assert inst["scale_class"] == classify_scale(
                    n_p, ScaleThresholds.for_resolution(96, 72))

    def test_generate_deterministic(self, tmp_path):
        params = LayoutParams(seed=76, target_object_count=4,
                              image_width=64, image_height=48)
        generate_dataset(params, 2, tmp_path / "a")
        generate_dataset(params, 2, tmp_path / "b")
        for rel in ("manifest.json", "scenes/scene_00000.json",
                    "labels/scene_00001.pgm", "depth/scene_00000.raw"):
            assert (tmp_path / "a" / rel).read_bytes() == \
                   (tmp_path / "b" / rel).read_bytes()

    def test_jobs_parity(self, tmp_path):
        params = LayoutParams(seed=77, target_object_count=4,
                              image_width=64, image_height=48)
        generate_dataset(params, 4, tmp_path / "serial", jobs=1)
        generate_dataset(params, 4, tmp_path / "parallel", jobs=3)
        serial = sorted(p.relative_to(tmp_path / "serial").as_posix()
                        for p in (tmp_path / "serial").rglob("*") if p.is_file())
        parallel = sorted(p.relative_to(tmp_path / "parallel").as_posix()
                          for p in (tmp_path / "parallel").rglob("*") if p.is_file())
        assert serial == parallel
        for rel in serial:
            assert (tmp_path / "serial" / rel).read_bytes() == \
                   (tmp_path / "parallel" / rel).read_bytes()

    def test_analyze_matches_manifest_counts(self, tmp_path):
        params = LayoutParams(seed=78, target_object_count=5,
                              image_width=96, image_height=72)
        manifest = generate_dataset(params, 3, tmp_path)
        metrics = analyze_dataset(tmp_path)
        visible = sum(1 for rec in manifest["scenes"]
                      for inst in rec["instances"] if inst["n_p"] > 0)
        assert metrics.n_scenes == 3
        assert metrics.object_count == pytest.approx(visible / 3)

    def test_query_pose_records_in_manifest(self, tmp_path):
        params = LayoutParams(seed=79, target_object_count=3,
                              image_width=64, image_height=48)
        manifest = generate_dataset(params, 1, tmp_path)
        used = {i["model_id"] for rec in manifest["scenes"]
                for i in rec["instances"]}
        assert {q["model_id"] for q in manifest["query_poses"]} == used
        for q in manifest["query_poses"]:
            assert len(q["poses"]) == 8
            yaws = [p["yaw_deg"] for p in q["poses"]]
            assert yaws == [45.0 * k for k in range(8)]


class TestCsvWriters:
    def test_loss_csv(self, tmp_path):
        path = tmp_path / "loss.csv"
        write_loss_csv([1.5, 0.25], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "step,mean_loss"
        assert lines[1] == "0,1.5" and lines[2] == "1,0.25"

    def test_viewpoint_csv(self, tmp_path):
        from synthscene.metrics import aggregate_metrics, scene_stats

        scene = assemble_scene(LayoutParams(seed=80, target_object_count=4), CATALOG)
        m = aggregate_metrics([scene_stats(scene, resolution=(64, 48))])
        path = tmp_path / "vp.csv"
        write_viewpoint_csv(m, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "azimuth_bin,elevation_bin,count"
        assert len(lines) == 1 + 16 * 8
        total = sum(int(line.split(",")[2]) for line in lines[1:])
        assert total == m.n_visible_instances
