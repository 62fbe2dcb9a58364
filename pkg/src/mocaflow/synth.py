"""Synthetic KITTI-style scenes with exact ground truth.

Objects are cuboids resting on a flat ground, filled with LiDAR returns and
drawn into the image as flat-coloured regions. Each object's mask is the part
of its projected hull that is point-symmetric about the projected box centre,
so the mask centroid sits on the projection of the centre. Objects are placed
so that neither their BEV footprints nor their 2D boxes touch, which keeps
every mask complete.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .geometry import (Box2D, Box3D, KittiCalibration, Mask2D, bev_overlap_many,
                       box3d_corners, boxes_to_bev_array, project_points)
from .io.formats import write_png, write_points_bin
from .io.kitti import calib_to_text, label_text
from .scene import Annotation, Instance, Scene, SceneBundle

DEFAULT_COUNTS = {"car": 3, "pedestrian": 2, "cyclist": 2}
DEFAULT_IMAGE_SIZE = (624, 192)

GROUND_Z = -1.75
OBJECT_BASE_Z = -1.70
N_GROUND = 6000
N_FIXTURE_GROUND = 32

# mean (w, l, h) in meters, points per object
_CLASS_SHAPE = {
    "car": ((1.6, 3.9, 1.56), (150, 300)),
    "pedestrian": ((0.6, 0.8, 1.73), (30, 80)),
    "cyclist": ((0.6, 1.76, 1.73), (40, 100)),
}
_CLASS_COLOR = {"car": (200, 40, 40), "pedestrian": (40, 200, 40), "cyclist": (40, 40, 200)}


def synthetic_calibration(width: int, height: int) -> KittiCalibration:
    f = 0.58 * width
    cx, cy = width / 2.0, 0.46 * height
    p_rect = np.array([[f, 0.0, cx, 0.06 * f], [0.0, f, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
    a = 0.01
    r_rect = np.eye(4)
    r_rect[1:3, 1:3] = [[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]]
    tr = np.eye(4)
    tr[:3, :3] = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
    tr[:3, 3] = [0.0, -0.08, -0.27]
    return KittiCalibration(p_rect, r_rect, tr)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, vertices in positive (left-turn) order."""
    pts = sorted(map(tuple, pts))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _inside_convex(poly: np.ndarray, xy: np.ndarray) -> np.ndarray:
    inside = np.ones(xy.shape[0], dtype=bool)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        cross = (b[0] - a[0]) * (xy[:, 1] - a[1]) - (b[1] - a[1]) * (xy[:, 0] - a[0])
        inside &= cross >= 0
    return inside


def symmetric_mask(corners_uv: np.ndarray, center_uv: np.ndarray) -> Optional[Mask2D]:
    hull = _convex_hull(corners_uv)
    x0, y0 = np.floor(corners_uv.min(axis=0)).astype(int)
    x1, y1 = np.ceil(corners_uv.max(axis=0)).astype(int)
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    centers = np.column_stack([cols.ravel() + 0.5, rows.ravel() + 0.5])
    hit = _inside_convex(hull, centers) & _inside_convex(hull, 2 * center_uv - centers)
    bitmap = hit.reshape(rows.shape)
    if not bitmap.any():
        return None
    return Mask2D((int(x0), int(y0)), bitmap)


def _sample_box(label: str, rng: np.random.Generator, tan_half_fov: float) -> Box3D:
    (w, l, h), _ = _CLASS_SHAPE[label]  # noqa: E741
    w, l, h = (s * rng.uniform(0.9, 1.1) for s in (w, l, h))  # noqa: E741
    x = rng.uniform(10.0, 45.0)
    y = rng.uniform(-0.8, 0.8) * tan_half_fov * x
    return Box3D((x, y, OBJECT_BASE_Z + h / 2), (w, l, h), rng.uniform(-math.pi, math.pi))


def _box_points(box: Box3D, n: int, rng: np.random.Generator) -> np.ndarray:
    margin = 0.02
    local = rng.uniform(-0.5, 0.5, size=(n, 3)) * (np.array([box.l, box.w, box.h]) - 2 * margin)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    xyz = np.column_stack([
        c * local[:, 0] - s * local[:, 1] + box.center[0],
        s * local[:, 0] + c * local[:, 1] + box.center[1],
        local[:, 2] + box.center[2],
    ])
    return np.column_stack([xyz, rng.uniform(0, 1, n)])


def _background(width: int, height: int, horizon: float, rng: np.random.Generator) -> np.ndarray:
    img = np.empty((height, width, 3), dtype=np.uint8)
    rows = np.arange(height)[:, None]
    sky = rows < horizon
    img[..., 0] = np.where(sky, 120 + rows * 60 // max(1, height), 90)
    img[..., 1] = np.where(sky, 160 + rows * 40 // max(1, height), 90)
    img[..., 2] = np.where(sky, 230, 95)
    noise = rng.integers(-6, 7, size=(height, width, 3))
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def generate_synthetic_scene(counts: Mapping[str, int] = DEFAULT_COUNTS,
                             image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
                             rng: Optional[np.random.Generator] = None,
                             scene_id: str = "000000", max_attempts: int = 2000) -> SceneBundle:
    """Build one scene with ``counts[label]`` objects of each class.

    Deterministic given ``rng``'s state. Raises ``RuntimeError`` if the
    objects cannot be placed without overlaps.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    width, height = image_size
    calib = synthetic_calibration(width, height)
    p = calib.P_rect
    tan_half_fov = p[0, 2] / p[0, 0]

    boxes: list[Box3D] = []
    labels: list[str] = []
    boxes2d: list[Box2D] = []
    uv_corners: list[np.ndarray] = []
    for label, n in counts.items():
        if label not in _CLASS_SHAPE:
            raise ValueError(f"unknown synthetic class {label!r}")
        for _ in range(n):
            for _attempt in range(max_attempts):
                box = _sample_box(label, rng, tan_half_fov)
                uvd = project_points(box3d_corners(box), calib, strict=False)
                if not np.all(uvd[:, 2] > 1.0):
                    continue
                uv = uvd[:, :2]
                if uv[:, 0].min() < 1 or uv[:, 1].min() < 1 or \
                        uv[:, 0].max() > width - 1 or uv[:, 1].max() > height - 1:
                    continue
                grown = Box3D(box.center, (box.w + 0.5, box.l + 0.5, box.h), box.yaw)
                if bev_overlap_many(grown, boxes_to_bev_array(boxes)).any():
                    continue
                b2 = Box2D(*uv.min(axis=0), *uv.max(axis=0))
                if any(b2.x_min < q.x_max + 1 and q.x_min < b2.x_max + 1 and
                       b2.y_min < q.y_max + 1 and q.y_min < b2.y_max + 1 for q in boxes2d):
                    continue
                boxes.append(box)
                labels.append(label)
                boxes2d.append(b2)
                uv_corners.append(uv)
                break
            else:
                raise RuntimeError(f"could not place a {label} after {max_attempts} attempts")

    ground = np.column_stack([
        rng.uniform(0.0, 60.0, N_GROUND),
        rng.uniform(-40.0, 40.0, N_GROUND),
        GROUND_Z - rng.uniform(0.0, 0.05, N_GROUND),
        rng.uniform(0.0, 1.0, N_GROUND),
    ])
    clusters = []
    for box, label in zip(boxes, labels):
        lo, hi = _CLASS_SHAPE[label][1]
        clusters.append(_box_points(box, int(rng.integers(lo, hi + 1)), rng))
    cloud = np.vstack([ground] + clusters).astype(np.float32)

    horizon = p[1, 2]
    image = _background(width, height, horizon, rng)
    annotations = []
    for box, label, b2, uv in zip(boxes, labels, boxes2d, uv_corners):
        center_uv = project_points(box.center, calib)[0, :2]
        mask = symmetric_mask(uv, center_uv)
        if mask is not None:
            x0, y0, x1, y1 = mask.extent()
            color = np.clip(np.array(_CLASS_COLOR[label]) + rng.integers(-30, 31, 3), 0, 255)
            image[y0:y1, x0:x1][mask.bitmap] = color.astype(np.uint8)
        annotations.append(Annotation(box, b2, label, mask))

    fixture = _fixture(cloud, boxes, calib, width, height, rng)
    originals = tuple(Instance(a.box3d, a.box2d, a.label) for a in annotations)
    scene = Scene(cloud, image, calib, originals)
    return SceneBundle(scene_id, scene, tuple(annotations), fixture)


def lidar_to_pixel_matrix(calib: KittiCalibration) -> np.ndarray:
    """The whole chain folded into one 3x4 matrix."""
    return calib.P_rect @ calib.R_rect @ calib.T_cam_from_lidar


def _fixture(cloud, boxes, calib, width, height, rng) -> dict:
    m = lidar_to_pixel_matrix(calib)
    pts = [np.array(b.center) for b in boxes]
    xyz = cloud[:, :3].astype(np.float64)
    hom = np.hstack([xyz, np.ones((len(xyz), 1))]) @ m.T
    with np.errstate(divide="ignore", invalid="ignore"):
        u, v = hom[:, 0] / hom[:, 2], hom[:, 1] / hom[:, 2]
    ok = np.flatnonzero((hom[:, 2] > 1.0) & (u >= 0) & (u < width) & (v >= 0) & (v < height))
    if ok.size:
        pick = rng.choice(ok, size=min(N_FIXTURE_GROUND, ok.size), replace=False)
        pts += list(xyz[np.sort(pick)])
    pts = np.array(pts, dtype=np.float64).reshape(-1, 3)
    hom = np.hstack([pts, np.ones((len(pts), 1))]) @ m.T
    pixels = np.column_stack([hom[:, 0] / hom[:, 2], hom[:, 1] / hom[:, 2], hom[:, 2]])
    return {"points": pts.tolist(), "pixels": pixels.tolist()}


def instance_id_map(bundle: SceneBundle) -> np.ndarray:
    """uint8 map with value k + 1 under the mask of annotation k."""
    width, height = bundle.scene.image_size
    id_map = np.zeros((height, width), dtype=np.uint8)
    for k, ann in enumerate(bundle.annotations):
        if ann.mask is not None:
            x0, y0, x1, y1 = ann.mask.extent()
            id_map[y0:y1, x0:x1][ann.mask.bitmap] = k + 1
    return id_map


def write_synthetic_scene(root, bundle: SceneBundle) -> None:
    root = Path(root)
    sid = bundle.id
    scene = bundle.scene
    write_points_bin(root / "velodyne" / f"{sid}.bin", scene.cloud)
    write_png(root / "image_2" / f"{sid}.png", scene.image)
    write_png(root / "masks" / f"{sid}.png", instance_id_map(bundle))
    for sub in ("calib", "label_2", "fixtures"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "calib" / f"{sid}.txt").write_text(calib_to_text(scene.calib), encoding="utf-8")
    (root / "label_2" / f"{sid}.txt").write_text(label_text(bundle.annotations, scene.calib),
                                                  encoding="utf-8")
    (root / "fixtures" / f"{sid}.json").write_text(
        json.dumps(bundle.fixture, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def scene_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def write_synthetic_corpus(root, n_scenes: int, seed: int = 0,
                           counts: Mapping[str, int] = DEFAULT_COUNTS,
                           image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE) -> list[str]:
    """Generate ``n_scenes`` scenes into a devkit-layout directory; returns the ids."""
    ids = []
    for i in range(n_scenes):
        sid = f"{i:06d}"
        bundle = generate_synthetic_scene(counts, image_size, scene_seed(seed, i), sid)
        write_synthetic_scene(root, bundle)
        ids.append(sid)
    return ids
