import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mocaflow.geometry import Box2D, Box3D, KittiCalibration, Mask2D  # noqa: E402
from mocaflow.gt_database import GtObject, build_database  # noqa: E402
from mocaflow.io.kitti import load_scene, scene_ids  # noqa: E402
from mocaflow.scene import Instance, Scene  # noqa: E402
from mocaflow.synth import write_synthetic_corpus  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def identity_kitti():
    P = np.hstack([np.eye(3), np.zeros((3, 1))])
    return KittiCalibration(P, np.eye(4), np.eye(4))


def make_object(oid, box2d, box3d=None, depth=10.0, label="car", points=None, value=None,
                patch_shape=None):
    """GtObject with a full rectangular mask covering ``box2d`` (integer corners)."""
    x0, y0, x1, y1 = (int(round(v)) for v in box2d)
    h, w = patch_shape or (y1 - y0, x1 - x0)
    if box3d is None:
        box3d = Box3D((depth, 5.0 * oid, 0.0), (1.0, 1.0, 1.0))
    if points is None:
        c = np.array(box3d.center)
        points = np.hstack([c + np.zeros((5, 3)), np.zeros((5, 1))]).astype(np.float32)
    fill = (oid * 37 % 256) if value is None else value
    patch = np.full((h, w, 3), fill, dtype=np.uint8)
    return GtObject(oid, label, box3d, Box2D(*box2d), Mask2D((x0, y0), np.ones((h, w), bool)),
                    np.asarray(points, np.float32), patch, depth)


def make_scene(originals=(), cloud=None, size=(200, 100), calib=None):
    width, height = size
    if cloud is None:
        cloud = np.zeros((0, 4), np.float32)
    insts = tuple(o if isinstance(o, Instance) else Instance(*o) for o in originals)
    calib = calib or KittiCalibration(
        np.array([[100.0, 0, width / 2, 0], [0, 100.0, height / 2, 0], [0, 0, 1, 0]]),
        np.eye(4), np.eye(4))
    return Scene(np.asarray(cloud, np.float32), np.zeros((height, width, 3), np.uint8), calib,
                 insts)


@pytest.fixture(scope="session")
def fixture_root():
    return FIXTURES / "kitti"


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_synthetic_corpus(root, 12, seed=11)
    return root


@pytest.fixture(scope="session")
def corpus_bundles(corpus):
    return [load_scene(corpus, sid) for sid in scene_ids(corpus)]


@pytest.fixture(scope="session")
def db_dir(corpus_bundles, tmp_path_factory):
    root = tmp_path_factory.mktemp("db")
    build_database(corpus_bundles).save(root)
    return root


# PASS/FAIL lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
