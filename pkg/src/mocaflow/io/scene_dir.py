"""Augmented-scene directories.

::

    cloud.bin          float32 (N, 4)
    image.png          8-bit RGB
    annotations.json   instances with provenance, paste threshold, rejection log
    flow.json          TransformFlow that maps the source scene to this one
    calib.txt          KITTI chain of the source scene (calib.json for nuScenes)
    fixture.json       optional correspondence fixture in augmented coordinates
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..geometry import KittiCalibration, NuScenesCalibration
from ..scene import Instance, Scene
from ..transform_flow import TransformFlow
from .formats import read_png, read_points_bin, write_png, write_points_bin
from .kitti import calib_to_text, read_calib


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_calib(root: Path, calib) -> None:
    if isinstance(calib, KittiCalibration):
        (root / "calib.txt").write_text(calib_to_text(calib), encoding="utf-8")
    else:
        dump_json(root / "calib.json", {
            "variant": "nuscenes",
            **{k: getattr(calib, k).tolist()
               for k in ("T_ego_from_lidar", "T_egoC_from_egoL", "T_cam_from_ego", "K")},
        })


def read_calib_any(root: Path):
    if (root / "calib.txt").exists():
        return read_calib(root / "calib.txt")
    d = json.loads((root / "calib.json").read_text(encoding="utf-8"))
    return NuScenesCalibration(d["T_ego_from_lidar"], d["T_egoC_from_egoL"], d["T_cam_from_ego"], d["K"])


def write_scene_dir(root, scene: Scene, meta: Optional[dict] = None,
                    fixture: Optional[dict] = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_points_bin(root / "cloud.bin", scene.cloud)
    write_png(root / "image.png", scene.image)
    annotations = dict(meta or {})
    annotations["objects"] = [inst.to_dict() for inst in scene.originals]
    dump_json(root / "annotations.json", annotations)
    (root / "flow.json").write_text(scene.flow.to_json(), encoding="utf-8")
    write_calib(root, scene.calib)
    if fixture is not None:
        dump_json(root / "fixture.json", fixture)


def read_scene_dir(root) -> tuple[Scene, dict, Optional[dict]]:
    """Return ``(scene, annotations_json, fixture_or_None)``."""
    root = Path(root)
    meta = json.loads((root / "annotations.json").read_text(encoding="utf-8"))
    originals = tuple(Instance.from_dict(d) for d in meta["objects"])
    flow = TransformFlow.from_json((root / "flow.json").read_text(encoding="utf-8"))
    scene = Scene(read_points_bin(root / "cloud.bin"), read_png(root / "image.png"),
                  read_calib_any(root), originals, flow)
    fixture = None
    if (root / "fixture.json").exists():
        fixture = json.loads((root / "fixture.json").read_text(encoding="utf-8"))
    return scene, meta, fixture


def fixture_arrays(fixture: dict) -> tuple[np.ndarray, np.ndarray]:
    return (np.array(fixture["points"], dtype=np.float64).reshape(-1, 3),
            np.array(fixture["pixels"], dtype=np.float64).reshape(-1, 3))
