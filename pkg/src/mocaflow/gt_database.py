"""Offline ground-truth object bank used as the paste source.

Each admitted annotation becomes a :class:`GtObject`: its interior points, the
rectangular image patch under its mask, the mask itself and both boxes, all in
the coordinates of the scene it came from. Pasting places objects back at
exactly those coordinates, so nothing is canonicalised.

On disk a database is a directory::

    manifest.json
    objects/000000.bin         float32 little-endian (N, 4)
    objects/000000_patch.png   8-bit RGB
    objects/000000_mask.png    8-bit L, 0/255
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import AnnotationMismatch, DepthNonPositive, MaskOutsideImage
from .geometry import Box2D, Box3D, Mask2D, points_in_box3d, project
from .io.formats import read_png, read_points_bin, write_png, write_points_bin
from .scene import SceneBundle

logger = logging.getLogger(__name__)

MIN_POINTS = 5
MANIFEST_FORMAT = "mocaflow-gtdb"
MANIFEST_VERSION = 1

DEFAULT_QUOTA = {"car": 12, "pedestrian": 6, "cyclist": 6}


@dataclass(frozen=True, eq=False)
class GtObject:
    id: int
    class_label: str
    box3d: Box3D
    box2d: Box2D
    mask: Mask2D
    points: np.ndarray  # (N, 4) float32
    patch: np.ndarray   # (H, W, 3) uint8, same H, W as mask.bitmap
    depth: float
    source_scene: str = ""
    source_index: int = -1

    def __post_init__(self):
        if self.patch.shape[:2] != self.mask.shape:
            raise ValueError("patch and mask dimensions differ")
        if not self.depth > 0:
            raise ValueError("object depth must be positive")

    def record(self, offset: int) -> dict:
        stem = f"objects/{self.id:06d}"
        return {
            "id": self.id,
            "class_label": self.class_label,
            "box3d": self.box3d.to_dict(),
            "box2d": list(self.box2d.as_tuple()),
            "mask_origin": list(self.mask.origin),
            "depth": self.depth,
            "num_points": int(self.points.shape[0]),
            "points_file": stem + ".bin",
            "patch_file": stem + "_patch.png",
            "mask_file": stem + "_mask.png",
            "source_scene": self.source_scene,
            "source_index": self.source_index,
            "offset": offset,
        }


class GtDatabase:
    """Immutable collection of :class:`GtObject` grouped by class label."""

    def __init__(self, objects: Iterable[GtObject] = ()):
        self.objects: tuple[GtObject, ...] = tuple(sorted(objects, key=lambda o: o.id))
        by_class: dict[str, list[GtObject]] = {}
        for obj in self.objects:
            by_class.setdefault(obj.class_label, []).append(obj)
        self.by_class = {k: tuple(v) for k, v in sorted(by_class.items())}

    def __len__(self) -> int:
        return len(self.objects)

    def count(self, label: str) -> int:
        return len(self.by_class.get(label, ()))

    def manifest(self) -> dict:
        records = [obj.record(i) for i, obj in enumerate(self.objects)]
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "classes": list(self.by_class),
            "counts": {k: len(v) for k, v in self.by_class.items()},
            "class_offsets": {
                k: [r["offset"] for r in records if r["class_label"] == k] for k in self.by_class
            },
            "records": records,
        }

    def save(self, root) -> None:
        root = Path(root)
        (root / "objects").mkdir(parents=True, exist_ok=True)
        manifest = self.manifest()
        for obj, rec in zip(self.objects, manifest["records"]):
            write_points_bin(root / rec["points_file"], obj.points)
            write_png(root / rec["patch_file"], obj.patch)
            write_png(root / rec["mask_file"], obj.mask.bitmap.astype(np.uint8) * 255)
        (root / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, root) -> "GtDatabase":
        root = Path(root)
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        if manifest.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{root}: not a ground-truth database")
        objects = []
        for rec in manifest["records"]:
            bitmap = read_png(root / rec["mask_file"]) > 127
            objects.append(GtObject(
                id=rec["id"],
                class_label=rec["class_label"],
                box3d=Box3D.from_dict(rec["box3d"]),
                box2d=Box2D(*rec["box2d"]),
                mask=Mask2D(tuple(rec["mask_origin"]), bitmap),
                points=read_points_bin(root / rec["points_file"]),
                patch=read_png(root / rec["patch_file"]),
                depth=rec["depth"],
                source_scene=rec["source_scene"],
                source_index=rec["source_index"],
            ))
        db = cls(objects)
        counts = {k: len(v) for k, v in db.by_class.items()}
        if counts != manifest["counts"]:
            raise ValueError(f"{root}: manifest counts {manifest['counts']} != records {counts}")
        return db


def check_mask(mask: Mask2D, box2d: Box2D, image_shape: Sequence[int]) -> None:
    """Raise if ``mask`` leaves the image or strays more than 1 px outside ``box2d``."""
    x0, y0, x1, y1 = mask.extent()
    height, width = image_shape[:2]
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise MaskOutsideImage(f"mask extent {(x0, y0, x1, y1)} exceeds {width}x{height} image")
    bx0, by0, bx1, by1 = mask.set_bounds()
    if (bx0 < box2d.x_min - 1 or by0 < box2d.y_min - 1
            or bx1 > box2d.x_max + 1 or by1 > box2d.y_max + 1):
        raise AnnotationMismatch(
            f"mask bounds {(bx0, by0, bx1, by1)} not within 1 px of box {box2d.as_tuple()}")


def _crop_scene(bundle: SceneBundle, min_points: int, max_truncation: Optional[float],
                max_occlusion: Optional[int]) -> list[GtObject]:
    scene = bundle.scene
    objs = []
    for index, ann in enumerate(bundle.annotations):
        if ann.mask is None:
            logger.debug("%s[%d]: no mask, skipped", bundle.id, index)
            continue
        if max_truncation is not None and ann.truncated > max_truncation:
            continue
        if max_occlusion is not None and ann.occluded > max_occlusion:
            continue
        check_mask(ann.mask, ann.box2d, scene.image.shape)
        inside = points_in_box3d(scene.cloud, ann.box3d)
        if inside.size < min_points:
            continue
        try:
            depth = project(ann.box3d.center, scene.calib).depth
        except DepthNonPositive:
            logger.debug("%s[%d]: box centre behind camera, skipped", bundle.id, index)
            continue
        x0, y0, x1, y1 = ann.mask.extent()
        objs.append(GtObject(
            id=-1,
            class_label=ann.label,
            box3d=ann.box3d,
            box2d=ann.box2d,
            mask=ann.mask,
            points=np.ascontiguousarray(scene.cloud[inside], dtype=np.float32),
            patch=np.ascontiguousarray(scene.image[y0:y1, x0:x1]),
            depth=depth,
            source_scene=bundle.id,
            source_index=index,
        ))
    return objs


def _crop_star(args):
    return _crop_scene(*args)


def build_database(scenes: Iterable[SceneBundle], min_points: int = MIN_POINTS,
                   max_truncation: Optional[float] = None, max_occlusion: Optional[int] = None,
                   workers: int = 1) -> GtDatabase:
    """Crop every admissible annotation of the (training-split) ``scenes``.

    Object ids are assigned in scene order then annotation order, so the
    result does not depend on ``workers``.
    """
    scenes = list(scenes)
    jobs = [(b, min_points, max_truncation, max_occlusion) for b in scenes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_scene = list(pool.map(_crop_star, jobs))
    else:
        per_scene = [_crop_star(j) for j in jobs]
    objects = []
    for objs in per_scene:
        for obj in objs:
            objects.append(replace(obj, id=len(objects)))
    return GtDatabase(objects)


def sample_objects(db: GtDatabase, quota: Mapping[str, int],
                   rng: np.random.Generator) -> list[GtObject]:
    """Uniformly draw up to ``quota[c]`` distinct objects of each class ``c``.

    Classes are visited in ``quota`` order. A class with too few objects
    contributes everything it has.
    """
    picked = []
    for label, want in quota.items():
        if want < 0:
            raise ValueError(f"negative quota for {label!r}")
        pool = db.by_class.get(label, ())
        k = min(int(want), len(pool))
        if k == 0:
            continue
        for i in rng.choice(len(pool), size=k, replace=False):
            picked.append(pool[int(i)])
    return picked
