import numpy as np
import pytest

from synthscene.mesh import (EmptyMesh, ParseError, TriangleMesh,
                             catalog_from_obj_dir, default_catalog, load_obj,
                             make_box, make_capsule, make_cone, make_sphere,
                             make_torus, save_obj)

CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 2 3
f 1 3 4
f 5 7 6
f 5 8 7
f 1 5 6
f 1 6 2
f 2 6 7
f 2 7 3
f 3 7 8
f 3 8 4
f 4 8 5
f 4 5 1
"""


class TestLoadObj:
    def test_minimal_cube(self, tmp_path):
        path = tmp_path / "cube.obj"
        path.write_text(CUBE_OBJ)
        mesh = load_obj(path)
        assert len(mesh.faces) == 12
        box = mesh.aabb()
        assert np.allclose(box.lo, [0, 0, 0]) and np.allclose(box.hi, [1, 1, 1])

    def test_two_vertex_face_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n")
        with pytest.raises(ParseError) as exc:
            load_obj(path)
        assert exc.value.line_no == 4

    def test_bad_coordinate_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 zero 0\n")
        with pytest.raises(ParseError) as exc:
            load_obj(path)
        assert exc.value.line_no == 1

    def test_no_faces_is_empty_mesh(self, tmp_path):
        path = tmp_path / "points.obj"
        path.write_text("v 0 0 0\nv 1 0 0\n")
        with pytest.raises(EmptyMesh):
            load_obj(path)

    def test_quad_fan_preserves_area(self, tmp_path):
        # oracle: a planar quad's area equals the sum of its two fan triangles
        path = tmp_path / "quad.obj"
        path.write_text("v 0 0 0\nv 2 0 0\nv 2 1 0\nv 0 1 0\nf 1 2 3 4\n")
        mesh = load_obj(path)
        assert len(mesh.faces) == 2
        assert mesh.area() == pytest.approx(2.0, abs=1e-9)

    def test_slash_variants_and_negative_indices(self, tmp_path):
        path = tmp_path / "mix.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            "vn 0 0 1\nvt 0 0\n"
            "f 1/1 2/1/1 3//1\n"
            "f -3 -2 -1\n")
        mesh = load_obj(path)
        assert len(mesh.faces) == 2
        assert np.array_equal(mesh.faces[0], mesh.faces[1])

    def test_save_load_roundtrip(self, tmp_path):
        mesh = make_box(1.0, 0.5, 0.25)
        path = tmp_path / "box.obj"
        save_obj(mesh, path)
        back = load_obj(path)
        assert np.allclose(back.vertices, mesh.vertices)
        assert np.array_equal(back.faces, mesh.faces)


class TestPrimitives:
    @pytest.mark.parametrize("mesh", [
        make_box(1, 0.6, 0.4), make_sphere(0.5, 6, 9), make_cone(0.5, 1.0, 12),
        make_torus(0.35, 0.15, 10, 6), make_capsule(0.3, 0.6, 4, 8)])
    def test_no_degenerate_triangles(self, mesh):
        v0, v1, v2 = mesh.triangles()
        areas = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
        assert (areas > 1e-9).all()

    def test_box_dimensions(self):
        box = make_box(2.0, 1.0, 0.5).aabb()
        assert np.allclose(box.size(), [2.0, 1.0, 0.5])

    def test_sphere_radius(self):
        mesh = make_sphere(0.5, 10, 14)
        r = np.linalg.norm(mesh.vertices, axis=1)
        assert np.allclose(r, 0.5, atol=1e-12)

    def test_normalized_unit_extent_centered(self):
        mesh = make_box(3.0, 1.0, 0.5).normalized()
        box = mesh.aabb()
        assert box.size().max() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(box.center(), 0.0, atol=1e-12)

    def test_face_index_bounds_checked(self):
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))


class TestCatalog:
    def test_default_catalog_size_and_normalization(self):
        cat = default_catalog()
        assert len(cat) == 25
        for model_id in cat.ids():
            box = cat[model_id].aabb()
            assert box.size().max() == pytest.approx(1.0, abs=1e-9)
            assert np.allclose(box.center(), 0.0, atol=1e-9)

    def test_catalog_order_is_stable(self):
        assert default_catalog().ids() == default_catalog().ids()

    def test_obj_dir_catalog(self, tmp_path):
        for name in ("b.obj", "a.obj"):
            save_obj(make_box(1, 1, 1), tmp_path / name)
        cat = catalog_from_obj_dir(tmp_path)
        assert cat.ids() == ["a", "b"]

    def test_duplicate_id_rejected(self):
        cat = default_catalog()
        with pytest.raises(ValueError):
            cat.add("box_00", make_box())
