import pathlib

import numpy as np
import pytest

import voxc

ROOT = pathlib.Path(__file__).resolve().parents[2]


def test_module_basics():
    assert voxc.__version__
    names = voxc.class_names()
    assert len(names) == voxc.NUM_CLASSES == 12
    assert len(set(names)) == 12
    assert voxc.NUM_LEVELS == 3
    assert voxc.TRUNCATION_VOXELS == 3.0


def test_volume_numpy_and_file_roundtrip(tmp_path):
    data = np.random.default_rng(0).uniform(0, 3, size=(4, 5, 6)).astype(np.float32)
    vol = voxc.VoxelVolume(data, voxel_size=0.094, origin=(1.0, 0.0, -2.0), kind="tdf")
    assert vol.shape == (4, 5, 6)
    assert vol.kind == "tdf"
    np.testing.assert_array_equal(vol.numpy(), data)

    path = str(tmp_path / "grid.vxc")
    vol.save(path)
    back = voxc.load_volume(path)
    assert back.voxel_size == pytest.approx(0.094)
    assert back.origin == pytest.approx((1.0, 0.0, -2.0))
    np.testing.assert_array_equal(back.numpy(), data)


def test_scene_generation_is_deterministic():
    kwargs = dict(room_min=(3.0, 2.4, 3.0), room_max=(3.6, 2.7, 3.6),
                  furniture_min=2, furniture_max=3)
    a = voxc.generate_scene(seed=2, **kwargs)
    b = voxc.generate_scene(seed=2, **kwargs)
    c = voxc.generate_scene(seed=3, **kwargs)
    np.testing.assert_array_equal(a.triangles(), b.triangles())
    assert a.triangle_count > 20
    assert a.triangle_labels().max() < voxc.NUM_CLASSES
    assert c.triangle_count != a.triangle_count or not np.array_equal(a.triangles(), c.triangles())
    lo, hi = a.bounds
    assert all(h > l for l, h in zip(lo, hi))


def test_plan_grids_ratios():
    plans = voxc.plan_grids((0, 0, 0), (3.3, 2.5, 3.3), margin=0.15)
    assert [p["level"] for p in plans] == [0, 1, 2]
    fine = plans[2]["dims"]
    assert all(d % 4 == 0 for d in fine)
    for axis in range(3):
        assert plans[1]["dims"][axis] * 2 == fine[axis]
        assert plans[0]["dims"][axis] * 4 == fine[axis]
    assert plans[0]["origin"] == plans[2]["origin"]


def test_mesh_to_tdf_ranges():
    scene = voxc.generate_scene(seed=3, room_min=(3.0, 2.4, 3.0), room_max=(3.4, 2.6, 3.4),
                                furniture_min=2, furniture_max=2)
    lo, _ = scene.bounds
    tdf, labels = voxc.mesh_to_tdf(scene, level=0, dims=(18, 16, 18),
                                   origin=(lo[0] - 0.2, lo[1] - 0.2, lo[2] - 0.2))
    arr = tdf.numpy()
    assert arr.shape == (18, 16, 18)
    assert arr.min() >= 0.0 and arr.max() <= 3.0
    assert (arr < 1.0).any()
    assert labels.numpy().shape == (18, 16, 18)


def test_scan_and_fuse_produces_tsdf():
    scene = voxc.generate_scene(seed=4, room_min=(3.0, 2.4, 3.0), room_max=(3.4, 2.6, 3.4),
                                furniture_min=2, furniture_max=2)
    lo, _ = scene.bounds
    tsdf = voxc.scan_and_fuse(scene, level=0, dims=(20, 16, 20),
                              origin=(lo[0] - 0.2, lo[1] - 0.2, lo[2] - 0.2),
                              seed=1, candidates=4, height_tries=8)
    assert tsdf.kind == "tsdf"
    arr = tsdf.numpy()
    assert arr.min() >= -3.0 and arr.max() <= 3.0
    assert (arr > -3.0).any()


def test_emd_point_masses():
    a = np.array([1.0, 0.0, 0.0, 0.0])
    b = np.array([0.0, 0.0, 0.0, 1.0])
    assert voxc.emd(a, b, lo=0.0, hi=4.0) == pytest.approx(3.0)
    assert voxc.emd(a, b, lo=0.0, hi=4.0) == pytest.approx(voxc.emd(b, a, lo=0.0, hi=4.0))
    assert voxc.emd(a, a, lo=0.0, hi=4.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        voxc.emd(a, 2.0 * b, lo=0.0, hi=4.0)


def test_marching_cubes_and_export(tmp_path):
    n = 24
    zyx = np.stack(np.meshgrid(*(np.arange(n) + 0.5,) * 3, indexing="ij"), axis=-1)
    dist = np.linalg.norm(zyx - n / 2.0, axis=-1)
    field = np.minimum(np.abs(dist - 8.0), 3.0).astype(np.float32)
    vol = voxc.VoxelVolume(field, voxel_size=0.05, kind="tdf")

    verts, faces = voxc.marching_cubes(vol, iso=1.0)
    assert len(verts) > 100 and len(faces) > 100
    radii = np.linalg.norm(verts - 0.05 * n / 2.0, axis=1)
    assert radii.min() > 0.05 * 6.0 and radii.max() < 0.05 * 10.0

    out = tmp_path / "sphere.obj"
    count = voxc.export_mesh(vol, iso=1.0, path=str(out))
    assert count == len(verts)
    assert out.stat().st_size > 0


def test_completion_and_semantic_metrics():
    rng = np.random.default_rng(1)
    target = rng.uniform(0, 3, size=(6, 6, 6)).astype(np.float32)
    tdf = lambda a: voxc.VoxelVolume(a, voxel_size=0.047, kind="tdf")
    tsdf = voxc.VoxelVolume(rng.uniform(-3, 3, size=(6, 6, 6)).astype(np.float32),
                            voxel_size=0.047, kind="tsdf")

    errs = voxc.l1_completion_errors(tdf(target), tdf(target), tsdf)
    assert errs["entire"] == pytest.approx(0.0)

    shifted = np.clip(target + 0.5, 0, 3).astype(np.float32)
    errs = voxc.l1_completion_errors(tdf(shifted), tdf(target), tsdf)
    assert errs["entire"] > 0.0

    labels = rng.integers(0, voxc.NUM_CLASSES, size=(6, 6, 6)).astype(np.uint8)
    lab = voxc.LabelVolume(labels, voxel_size=0.047)
    mask = np.ones((6, 6, 6), dtype=np.uint8)
    acc = voxc.semantic_accuracy(lab, lab, mask)
    assert acc["average"] == pytest.approx(1.0)
    iou = voxc.semantic_iou(lab, lab, mask)
    assert all(v == pytest.approx(1.0) for v in iou.values() if v is not None)

    flat = voxc.VoxelVolume(np.full((4, 4, 64), 1.5, np.float32), voxel_size=0.047, kind="tdf")
    assert voxc.seam_score(flat, block=32) == pytest.approx(0.0)


def test_conv3d_identity_kernel():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 3, 4, 5)).astype(np.float32)
    weight = np.zeros((2, 2, 1, 1, 1), dtype=np.float32)
    weight[0, 0] = 1.0
    weight[1, 1] = 1.0
    bias = np.zeros(2, dtype=np.float32)
    y = voxc.conv3d(x, weight, bias)
    np.testing.assert_allclose(y, x, atol=1e-6)


def test_pipeline_stage_and_upstream_errors(tmp_path):
    p = voxc.Pipeline(str(ROOT / "configs" / "toy.json"), out_dir=str(tmp_path / "out"))
    assert p.scene_count == 5 and p.heldout == 1
    with pytest.raises(RuntimeError, match="build-corpus"):
        p.train("full")
    p.gen_scenes()
    scenes = pathlib.Path(p.scenes_dir())
    assert len(list(scenes.glob("scene_*.obj"))) == p.scene_count
