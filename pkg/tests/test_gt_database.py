from collections import Counter

import numpy as np
import pytest

from mocaflow.errors import AnnotationMismatch, MaskOutsideImage
from mocaflow.geometry import Box2D, Box3D, Mask2D
from mocaflow.gt_database import (DEFAULT_QUOTA, GtDatabase, build_database, check_mask,
                                  sample_objects)
from mocaflow.scene import Annotation, SceneBundle

from conftest import make_scene
from oracles import points_in_box_bruteforce


def single_object_bundle(n_inside=50, n_outside=30, seed=0, label="car", **ann_kw):
    rng = np.random.default_rng(seed)
    box = Box3D((0.5, 0.2, 10.0), (2.0, 2.0, 2.0), 0.3)
    inside = rng.uniform(-0.5, 0.5, (n_inside, 3)) + box.center
    outside = rng.uniform(-0.5, 0.5, (n_outside, 3)) + np.array([5.0, 5.0, 10.0])
    cloud = np.hstack([np.vstack([inside, outside]), rng.random((n_inside + n_outside, 1))])
    box2d = Box2D(95, 45, 105, 55)
    mask = Mask2D((95, 45), np.ones((10, 10), bool))
    scene = make_scene([(box, box2d, label)], cloud=cloud)
    image = scene.image.copy()
    image[45:55, 95:105] = (10, 20, 30)
    scene = scene.replace(image=image)
    return SceneBundle("s0", scene, (Annotation(box, box2d, label, mask, **ann_kw),))


class TestBuild:
    def test_single_car(self):
        bundle = single_object_bundle()
        db = build_database([bundle])
        assert db.count("car") == 1
        obj = db.objects[0]
        expected = points_in_box_bruteforce(bundle.scene.cloud, obj.box3d.center, obj.box3d.size,
                                            obj.box3d.yaw)
        assert len(expected) == 50 and obj.points.shape == (50, 4)
        assert obj.depth == 10.0
        assert obj.patch.shape == (10, 10, 3) and (obj.patch == (10, 20, 30)).all()

    def test_min_points_floor(self):
        assert len(build_database([single_object_bundle(n_inside=2)], min_points=5)) == 0
        assert len(build_database([single_object_bundle(n_inside=5)], min_points=5)) == 1

    def test_empty(self, tmp_path):
        db = build_database([])
        assert len(db) == 0
        m = db.manifest()
        assert m["counts"] == {} and m["records"] == [] and m["format"] == "mocaflow-gtdb"
        db.save(tmp_path)
        assert len(GtDatabase.load(tmp_path)) == 0

    def test_filters(self):
        truncated = single_object_bundle(truncated=0.8)
        occluded = single_object_bundle(occluded=2)
        assert len(build_database([truncated], max_truncation=0.5)) == 0
        assert len(build_database([truncated])) == 1
        assert len(build_database([occluded], max_occlusion=1)) == 0
        assert len(build_database([occluded], max_occlusion=2)) == 1

    def test_skips_missing_mask(self):
        b = single_object_bundle()
        ann = b.annotations[0]
        bare = SceneBundle(b.id, b.scene, (Annotation(ann.box3d, ann.box2d, ann.label, None),))
        assert len(build_database([bare])) == 0

    def test_crop_soundness(self, corpus_bundles):
        db = build_database(corpus_bundles)
        assert len(db) > 0
        for obj in db.objects:
            idx = points_in_box_bruteforce(obj.points, obj.box3d.center, obj.box3d.size, obj.box3d.yaw)
            assert idx == set(range(len(obj.points)))
            assert obj.mask.shape == obj.patch.shape[:2]
            assert obj.depth > 0

    def test_ids_and_order(self, corpus_bundles):
        db = build_database(corpus_bundles)
        assert [o.id for o in db.objects] == list(range(len(db)))
        assert list(db.by_class) == sorted(db.by_class)

    def test_rebuild_is_byte_identical(self, corpus_bundles, tmp_path):
        build_database(corpus_bundles).save(tmp_path / "a")
        build_database(corpus_bundles, workers=2).save(tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


class TestContainer:
    def test_round_trip_is_exact(self, corpus_bundles, tmp_path):
        db = build_database(corpus_bundles)
        db.save(tmp_path)
        back = GtDatabase.load(tmp_path)
        assert back.manifest() == db.manifest()
        for a, b in zip(db.objects, back.objects):
            assert a.box3d == b.box3d and a.box2d == b.box2d and a.mask == b.mask
            assert a.depth == b.depth and a.class_label == b.class_label
            assert a.points.tobytes() == b.points.tobytes()
            np.testing.assert_array_equal(a.patch, b.patch)

    def test_manifest_counts_checked(self, db_dir, tmp_path):
        import json
        import shutil

        shutil.copytree(db_dir, tmp_path / "db")
        path = tmp_path / "db" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["counts"]["car"] += 1
        path.write_text(json.dumps(manifest))
        with pytest.raises(ValueError, match="counts"):
            GtDatabase.load(tmp_path / "db")

    def test_mask_png_is_0_255(self, db_dir):
        from mocaflow.io.formats import read_png

        mask = read_png(next((db_dir / "objects").glob("*_mask.png")))
        assert mask.dtype == np.uint8 and set(np.unique(mask)) <= {0, 255}


class TestCheckMask:
    def test_outside_image(self):
        with pytest.raises(MaskOutsideImage):
            check_mask(Mask2D((95, 0), np.ones((4, 10), bool)), Box2D(95, 0, 105, 4), (50, 100, 3))

    def test_mismatch(self):
        with pytest.raises(AnnotationMismatch):
            check_mask(Mask2D((10, 10), np.ones((5, 5), bool)), Box2D(10, 10, 13, 15), (50, 100, 3))

    def test_within_one_pixel(self):
        check_mask(Mask2D((10, 10), np.ones((5, 5), bool)), Box2D(10.5, 10.2, 14.1, 14.3), (50, 100, 3))


def class_db(counts):
    from conftest import make_object

    objs = []
    for label, n in counts.items():
        for _ in range(n):
            oid = len(objs)
            objs.append(make_object(oid, (0, 0, 4, 4), label=label))
    return GtDatabase(objs)


class TestSample:
    def test_paper_quota(self):
        db = class_db({"car": 20, "pedestrian": 10, "cyclist": 8})
        got = sample_objects(db, DEFAULT_QUOTA, np.random.default_rng(0))
        assert len(got) == 24
        assert Counter(o.class_label for o in got) == {"car": 12, "pedestrian": 6, "cyclist": 6}

    def test_shortfall_clamps(self):
        db = class_db({"car": 3})
        assert len(sample_objects(db, {"car": 5}, np.random.default_rng(0))) == 3

    def test_missing_class(self):
        db = class_db({"car": 3})
        assert sample_objects(db, {"truck": 2}, np.random.default_rng(0)) == []

    def test_same_seed_same_sequence(self):
        db = class_db({"car": 30, "pedestrian": 10})
        a = [o.id for o in sample_objects(db, {"car": 12, "pedestrian": 6}, np.random.default_rng(9))]
        b = [o.id for o in sample_objects(db, {"car": 12, "pedestrian": 6}, np.random.default_rng(9))]
        assert a == b

    def test_no_duplicates_and_exact_histogram(self):
        db = class_db({"car": 15, "pedestrian": 7, "cyclist": 9})
        rng = np.random.default_rng(1)
        total = Counter()
        for _ in range(10_000):
            batch = sample_objects(db, DEFAULT_QUOTA, rng)
            ids = [o.id for o in batch]
            assert len(ids) == len(set(ids))
            total.update(o.class_label for o in batch)
        assert total == {"car": 120_000, "pedestrian": 60_000, "cyclist": 60_000}

    def test_negative_quota(self):
        with pytest.raises(ValueError):
            sample_objects(class_db({"car": 1}), {"car": -1}, np.random.default_rng(0))
