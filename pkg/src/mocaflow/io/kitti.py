"""KITTI object-detection file formats.

A scene root follows the devkit layout, plus two optional folders::

    velodyne/<id>.bin   calib/<id>.txt   image_2/<id>.png   label_2/<id>.txt
    masks/<id>.png      instance-id map; pixel value k marks label line k-1
    fixtures/<id>.json  correspondence fixture written by the synthetic generator

Labels are stored in the rectified camera frame (bottom-centre location,
``rotation_y`` about the camera y axis) and converted to LiDAR :class:`Box3D`
through the scene's calibration.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from ..errors import ParseError
from ..geometry import Box2D, Box3D, KittiCalibration, Mask2D
from ..scene import Annotation, Instance, Scene, SceneBundle
from .formats import read_points_bin

_CALIB_WIDTHS = {"P0": 12, "P1": 12, "P2": 12, "P3": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
_IGNORED_TYPES = {"DontCare"}


def _fmt(x: float) -> str:
    return repr(float(x))


def parse_calib_text(text: str, camera: int = 2) -> KittiCalibration:
    """Parse a KITTI ``calib/*.txt`` document; ``P<camera>`` becomes ``P_rect``."""
    values: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError("expected 'key: values'", line=lineno)
        key, _, rest = line.partition(":")
        key = key.strip()
        tokens = rest.split()
        if key not in _CALIB_WIDTHS:
            continue
        try:
            nums = np.array([float(t) for t in tokens], dtype=np.float64)
        except ValueError:
            raise ParseError("non-numeric calibration value", key=key, line=lineno) from None
        if nums.size != _CALIB_WIDTHS[key]:
            raise ParseError(f"expected {_CALIB_WIDTHS[key]} values, got {nums.size}",
                             key=key, line=lineno)
        if not np.all(np.isfinite(nums)):
            raise ParseError("non-finite calibration value", key=key, line=lineno)
        values[key] = nums

    p_key = f"P{camera}"
    for key in (p_key, "R0_rect", "Tr_velo_to_cam"):
        if key not in values:
            raise ParseError("missing calibration entry", key=key)
    r_rect = np.eye(4)
    r_rect[:3, :3] = values["R0_rect"].reshape(3, 3)
    tr = np.eye(4)
    tr[:3, :] = values["Tr_velo_to_cam"].reshape(3, 4)
    try:
        return KittiCalibration(values[p_key].reshape(3, 4), r_rect, tr)
    except ValueError as err:
        raise ParseError(str(err)) from None


def read_calib(path, camera: int = 2) -> KittiCalibration:
    return parse_calib_text(Path(path).read_text(encoding="utf-8"), camera=camera)


def calib_to_text(calib: KittiCalibration, camera: int = 2) -> str:
    """Serialise with round-trip-exact floats. Every P row carries ``P_rect``."""
    lines = []
    for i in range(4):
        lines.append(f"P{i}: " + " ".join(_fmt(x) for x in calib.P_rect.ravel()))
    lines.append("R0_rect: " + " ".join(_fmt(x) for x in calib.R_rect[:3, :3].ravel()))
    lines.append("Tr_velo_to_cam: " + " ".join(_fmt(x) for x in calib.T_cam_from_lidar[:3, :].ravel()))
    return "\n".join(lines) + "\n"


def _rect_rotation(calib: KittiCalibration) -> np.ndarray:
    return calib.R_rect[:3, :3] @ calib.T_cam_from_lidar[:3, :3]


def box_to_label_fields(box: Box3D, calib: KittiCalibration) -> tuple:
    """LiDAR box to KITTI ``(h, w, l, x, y, z, rotation_y)`` in the rectified camera frame."""
    center = calib.lidar_to_rect(np.array(box.center))[0]
    heading = _rect_rotation(calib) @ np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0])
    ry = math.atan2(-heading[2], heading[0])
    return (box.h, box.w, box.l, center[0], center[1] + box.h / 2, center[2], ry)


def label_fields_to_box(h, w, l, x, y, z, ry, calib: KittiCalibration) -> Box3D:  # noqa: E741
    center = calib.rect_to_lidar(np.array([x, y - h / 2, z]))[0]
    heading = _rect_rotation(calib).T @ np.array([math.cos(ry), 0.0, -math.sin(ry)])
    yaw = math.atan2(heading[1], heading[0])
    return Box3D(tuple(center), (w, l, h), yaw)


def parse_label_text(text: str, calib: KittiCalibration) -> list[tuple[int, Annotation]]:
    """Parse label lines, returning ``(line_index, annotation)`` pairs (masks unset).

    ``line_index`` counts every line of the file, DontCare included, so it
    lines up with instance ids in the mask image.
    """
    out = []
    for index, line in enumerate(text.splitlines()):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) not in (15, 16):
            raise ParseError(f"label needs 15 fields, got {len(tokens)}", line=index + 1)
        kind = tokens[0]
        if kind in _IGNORED_TYPES:
            continue
        try:
            nums = [float(t) for t in tokens[1:15]]
        except ValueError:
            raise ParseError("non-numeric label field", key=kind, line=index + 1) from None
        truncated, occluded, _alpha, x1, y1, x2, y2, h, w, l, x, y, z, ry = nums
        box3d = label_fields_to_box(h, w, l, x, y, z, ry, calib)
        out.append((index, Annotation(box3d, Box2D(x1, y1, x2, y2), kind.lower(),
                                      truncated=truncated, occluded=int(occluded))))
    return out


def label_text(annotations, calib: KittiCalibration) -> str:
    """Write annotations (anything with ``box3d``, ``box2d``, ``label``) as KITTI lines."""
    lines = []
    for ann in annotations:
        h, w, l, x, y, z, ry = box_to_label_fields(ann.box3d, calib)  # noqa: E741
        alpha = ry - math.atan2(x, z)
        truncated = getattr(ann, "truncated", 0.0)
        occluded = getattr(ann, "occluded", 0)
        fields = [ann.label.capitalize(), _fmt(truncated), str(int(occluded)), _fmt(alpha),
                  *(_fmt(v) for v in ann.box2d.as_tuple()),
                  *(_fmt(v) for v in (h, w, l, x, y, z, ry))]
        lines.append(" ".join(fields))
    return "".join(line + "\n" for line in lines)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def mask_from_id_map(id_map: np.ndarray, instance_id: int) -> Optional[Mask2D]:
    hit = id_map == instance_id
    if not hit.any():
        return None
    rows = np.flatnonzero(hit.any(axis=1))
    cols = np.flatnonzero(hit.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    return Mask2D((int(c0), int(r0)), hit[r0:r1, c0:c1])


def box_mask(box: Box2D, width: int, height: int) -> Optional[Mask2D]:
    """Rectangular mask over the pixels whose centres fall inside ``box``."""
    c0 = max(0, math.ceil(box.x_min - 0.5))
    c1 = min(width, math.floor(box.x_max - 0.5) + 1)
    r0 = max(0, math.ceil(box.y_min - 0.5))
    r1 = min(height, math.floor(box.y_max - 0.5) + 1)
    if c1 <= c0 or r1 <= r0:
        return None
    return Mask2D((c0, r0), np.ones((r1 - r0, c1 - c0), dtype=bool))


def load_kitti_scene(velodyne_path, image_path, calib_path, label_path,
                     mask_source=None, camera: int = 2,
                     scene_id: Optional[str] = None) -> SceneBundle:
    """Read one KITTI frame.

    ``mask_source`` is an instance-id PNG (see module docstring). Without it
    each annotation gets a rectangular mask covering its 2D box.
    """
    cloud = read_points_bin(velodyne_path)
    image = read_image(image_path)
    calib = read_calib(calib_path, camera=camera)
    labelled = parse_label_text(Path(label_path).read_text(encoding="utf-8"), calib)
    height, width = image.shape[:2]
    id_map = None
    if mask_source is not None:
        with Image.open(mask_source) as im:
            id_map = np.array(im)
        if id_map.shape[:2] != (height, width):
            raise ParseError(f"mask image {id_map.shape[:2]} does not match image {(height, width)}")
    annotations = []
    for index, ann in labelled:
        if id_map is not None:
            mask = mask_from_id_map(id_map, index + 1)
        else:
            mask = box_mask(ann.box2d, width, height)
        annotations.append(Annotation(ann.box3d, ann.box2d, ann.label, mask,
                                      ann.truncated, ann.occluded))
    originals = tuple(Instance(a.box3d, a.box2d, a.label) for a in annotations)
    scene = Scene(cloud, image, calib, originals)
    return SceneBundle(scene_id or Path(velodyne_path).stem, scene, tuple(annotations))


def scene_ids(root) -> list[str]:
    return sorted(p.stem for p in (Path(root) / "velodyne").glob("*.bin"))


def load_scene(root, scene_id: str, masks_dir=None, camera: int = 2) -> SceneBundle:
    """Load ``scene_id`` from a devkit-layout ``root`` together with its fixture, if any."""
    root = Path(root)
    masks_dir = Path(masks_dir) if masks_dir is not None else root / "masks"
    mask_path = masks_dir / f"{scene_id}.png"
    bundle = load_kitti_scene(
        root / "velodyne" / f"{scene_id}.bin",
        root / "image_2" / f"{scene_id}.png",
        root / "calib" / f"{scene_id}.txt",
        root / "label_2" / f"{scene_id}.txt",
        mask_path if mask_path.exists() else None,
        camera=camera,
        scene_id=scene_id,
    )
    fixture_path = root / "fixtures" / f"{scene_id}.json"
    if fixture_path.exists():
        fixture = json.loads(fixture_path.read_text(encoding="utf-8"))
        bundle = SceneBundle(bundle.id, bundle.scene, bundle.annotations, fixture)
    return bundle
