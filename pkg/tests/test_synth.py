import numpy as np
import pytest

from editeval.synth import Camera, Plane, SceneSpec, Sphere, random_scene, synth_scene, write_synthetic_suite

CAM = Camera(32, 24, 30.0, 30.0)


def fd_normals(depth, cam):
    """Normals from finite differences of back-projected points, map frame."""
    pts = cam.rays() * depth[..., None]
    du = pts[1:-1, 2:] - pts[1:-1, :-2]
    dv = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n = np.cross(dv, du)  # camera frame, facing the camera
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return n * np.array([1.0, -1.0, -1.0])


def test_fronto_parallel_plane():
    scene = synth_scene(SceneSpec(CAM, (Plane((0, 0, 2.0), (0, 0, -1.0), 3),)))
    assert scene.depth.valid.all()
    np.testing.assert_allclose(scene.depth.values, 2.0)
    np.testing.assert_allclose(scene.normals.vectors, np.broadcast_to([0, 0, 1.0], (24, 32, 3)))
    assert (scene.labels.labels == 3).all()


def test_plane_orientation_does_not_depend_on_normal_sign():
    a = synth_scene(SceneSpec(CAM, (Plane((0, 0, 2.0), (0, 0, 1.0)),)))
    np.testing.assert_allclose(a.normals.vectors[..., 2], 1.0)


def test_tilted_plane():
    scene = synth_scene(SceneSpec(CAM, (Plane((0, 0, 3.0), (0.3, -0.2, -1.0)),)))
    n = scene.normals.vectors
    np.testing.assert_allclose(n, np.broadcast_to(n[0, 0], n.shape), atol=1e-12)
    # inverse depth is affine in pixel coordinates for a plane
    inv = 1.0 / scene.depth.values
    u, v = np.meshgrid(np.arange(32), np.arange(24))
    design = np.stack([u.ravel(), v.ravel(), np.ones(u.size)], axis=1)
    coef, *_ = np.linalg.lstsq(design, inv.ravel(), rcond=None)
    np.testing.assert_allclose(design @ coef, inv.ravel(), atol=1e-12)
    np.testing.assert_allclose(fd_normals(scene.depth.values, CAM), n[1:-1, 1:-1], atol=1e-3)


def test_floor_plane_faces_up():
    scene = synth_scene(SceneSpec(CAM, (Plane((0, 1.0, 0), (0, -1.0, 0)),)))
    valid = scene.depth.valid
    assert valid[-1].all() and not valid[0].any()  # only the lower half sees the floor
    np.testing.assert_allclose(scene.normals.vectors[valid], np.broadcast_to([0, 1.0, 0], (valid.sum(), 3)),
                               atol=1e-12)
    assert (scene.labels.labels[~valid] == 255).all()


def test_sphere_center():
    cam = Camera(33, 33, 30.0, 30.0)
    scene = synth_scene(SceneSpec(cam, (Sphere((0, 0, 4.0), 1.0, 8),)))
    c = 16
    np.testing.assert_allclose(scene.normals.vectors[c, c], [0, 0, 1.0], atol=1e-12)
    d = np.where(scene.depth.valid, scene.depth.values, np.inf)
    assert d[c, c] == d.min() == pytest.approx(3.0)
    assert not scene.depth.valid[0, 0]


def test_sphere_occludes_plane():
    scene = synth_scene(SceneSpec(CAM, (Plane((0, 0, 5.0), (0, 0, -1.0), 2), Sphere((0, 0, 3.0), 0.5, 13))))
    assert scene.labels.labels[12, 16] == 13 and scene.labels.labels[0, 0] == 2
    assert scene.depth.values[12, 16] < 3.0


@pytest.mark.parametrize("seed", range(5))
def test_random_scene_unit_normals(seed):
    scene = synth_scene(random_scene(seed))
    v = scene.normals.vectors[scene.normals.valid]
    np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-12)
    assert (scene.depth.values[scene.depth.valid] > 0).all()
    assert 0.0 <= scene.image.pixels.min() and scene.image.pixels.max() <= 1.0


def test_scenes_are_seeded():
    a, b = synth_scene(random_scene(4)), synth_scene(random_scene(4))
    assert a.image == b.image
    np.testing.assert_array_equal(a.depth.values, b.depth.values)


def test_write_suite_layout(tmp_path):
    dirs = write_synthetic_suite(tmp_path, count=2, width=16, height=12)
    for d in ("depth", "normals", "seg"):
        assert (dirs[d] / "manifest.jsonl").read_text().count("\n") == 2
    for task in ("depth", "normals", "seg19", "seg7"):
        assert sorted(p.name for p in (dirs["generated"] / task).iterdir()) == ["scene_0000.png", "scene_0001.png"]


def test_empty_scene_rejected():
    with pytest.raises(ValueError):
        synth_scene(SceneSpec(CAM, ()))
