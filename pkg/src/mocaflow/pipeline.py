"""End-to-end augmentation: paste, then global transforms recorded in a flow.

Every scene gets its own generator seeded from ``(seed, crc32(scene_id))``, so
the output of a scene depends only on the configuration, its own bytes and the
database, never on worker count or scheduling.
"""

from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .gt_database import DEFAULT_QUOTA, GtDatabase, sample_objects
from .io.kitti import load_scene, scene_ids
from .io.scene_dir import dump_json, fixture_arrays, read_scene_dir, write_scene_dir
from .moca import (DEFAULT_THRESHOLDS, REASONS, paste, parse_blend, plan_paste,
                   resolve_blend_modes, sample_threshold)
from .scene import Instance, Scene, SceneBundle
from .transform_flow import (Flip, HFlip, Pad, Resize, RotateZ, Scale, TransformFlow, Translate,
                             apply_image_flow_to_boxes, apply_image_flow_to_image,
                             apply_point_flow, apply_point_flow_to_boxes, correspond_points,
                             image_flow_matrix, point_flow_matrix)

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    seed: int = 0
    thresholds: tuple = DEFAULT_THRESHOLDS
    quota: dict = field(default_factory=lambda: dict(DEFAULT_QUOTA))
    blend: str = "random"
    flip_prob: float = 0.5
    rotation_range: tuple = (-math.pi / 4, math.pi / 4)
    scale_range: tuple = (0.95, 1.05)
    translation_std: float = 0.2
    image_flip_prob: float = 0.5
    image_scale_range: tuple = (0.9, 1.1)
    image_pad_max: int = 8
    batch_iof: bool = False
    workers: int = 1

    def __post_init__(self):
        self.thresholds = tuple(float(t) for t in self.thresholds)
        self.quota = {str(k): int(v) for k, v in self.quota.items()}
        self.rotation_range = tuple(float(x) for x in self.rotation_range)
        self.scale_range = tuple(float(x) for x in self.scale_range)
        self.image_scale_range = tuple(float(x) for x in self.image_scale_range)
        self.validate()

    def validate(self) -> None:
        if not self.thresholds or any(not 0.0 <= t <= 1.0 for t in self.thresholds):
            raise ConfigError(f"thresholds must be a non-empty set in [0, 1]: {self.thresholds}")
        if any(v < 0 for v in self.quota.values()):
            raise ConfigError(f"quota counts must be >= 0: {self.quota}")
        for name in ("flip_prob", "image_flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("rotation_range", "scale_range", "image_scale_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"{name} must be ordered (low <= high)")
        if self.scale_range[0] <= 0 or self.image_scale_range[0] <= 0:
            raise ConfigError("scale ranges must be positive")
        if self.translation_std < 0 or self.image_pad_max < 0:
            raise ConfigError("translation_std and image_pad_max must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            parse_blend(self.blend)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err)) from None


def scene_rng(seed: int, scene_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(scene_id.encode("utf-8"))])


def draw_flow(config: RunConfig, rng: np.random.Generator, width: int, height: int) -> TransformFlow:
    """Global flip, rotation, scale and translation for points; flip, resize, pad for the image.

    Every random number is drawn regardless of outcome, keeping streams aligned.
    """
    flip = rng.random() < config.flip_prob
    angle = rng.uniform(*config.rotation_range)
    factor = rng.uniform(*config.scale_range)
    shift = rng.normal(0.0, 1.0, 3) * config.translation_std
    point_flow = []
    if flip:
        point_flow.append(Flip("y"))
    point_flow += [RotateZ(angle), Scale(factor), Translate(*shift)]

    img_flip = rng.random() < config.image_flip_prob
    img_scale = rng.uniform(*config.image_scale_range)
    left, top = rng.integers(0, config.image_pad_max + 1, size=2)
    image_flow = []
    if img_flip:
        image_flow.append(HFlip(width))
    image_flow += [Resize(img_scale), Pad(int(left), int(top))]
    return TransformFlow(tuple(point_flow), tuple(image_flow))


def apply_flow_to_scene(scene: Scene, flow: TransformFlow) -> Scene:
    cloud = apply_point_flow(scene.cloud, flow.point_flow).astype(np.float32)
    boxes3d = apply_point_flow_to_boxes([o.box3d for o in scene.originals], flow.point_flow)
    boxes2d = apply_image_flow_to_boxes([o.box2d for o in scene.originals], flow.image_flow)
    instances = tuple(Instance(b3, b2, o.label, o.provenance, o.source_id)
                      for o, b3, b2 in zip(scene.originals, boxes3d, boxes2d))
    image = apply_image_flow_to_image(scene.image, flow.image_flow)
    point_flow = scene.flow.point_flow + flow.point_flow
    image_flow = scene.flow.image_flow + flow.image_flow
    return scene.replace(cloud=np.ascontiguousarray(cloud), image=np.ascontiguousarray(image),
                         originals=instances, flow=TransformFlow(point_flow, image_flow))


def transform_fixture(fixture: dict, flow: TransformFlow) -> dict:
    """Carry fixture points and their true pixels through the composite flow matrices."""
    points, pixels = fixture_arrays(fixture)
    m = point_flow_matrix(flow.point_flow)
    a = image_flow_matrix(flow.image_flow)
    pts = (np.hstack([points, np.ones((len(points), 1))]) @ m.T)[:, :3]
    uv = np.hstack([pixels[:, :2], np.ones((len(pixels), 1))]) @ a.T
    pix = np.column_stack([uv[:, 0], uv[:, 1], pixels[:, 2]])
    return {"points": pts.tolist(), "pixels": pix.tolist()}


def augment_scene(bundle: SceneBundle, db: GtDatabase, config: RunConfig,
                  rng: np.random.Generator) -> tuple[Scene, dict, Optional[dict]]:
    """Paste then transform one scene. Returns ``(scene, annotations_meta, fixture)``."""
    scene = bundle.scene
    width, height = scene.image_size
    threshold = sample_threshold(config.thresholds, rng)
    sampled = sample_objects(db, config.quota, rng)
    fits, outside = [], []
    for obj in sampled:
        x0, y0, x1, y1 = obj.mask.extent()
        (fits if x0 >= 0 and y0 >= 0 and x1 <= width and y1 <= height else outside).append(obj)
    plan = plan_paste(scene, fits, threshold, batch=config.batch_iof)
    modes = resolve_blend_modes(plan, config.blend, rng)
    pasted = paste(scene, plan, modes)
    flow = draw_flow(config, rng, width, height)
    out = apply_flow_to_scene(pasted, flow)

    got = {}
    for obj in sampled:
        got[obj.class_label] = got.get(obj.class_label, 0) + 1
    meta = {
        "scene_id": bundle.id,
        "threshold": threshold,
        "sampled": [o.id for o in sampled],
        "shortfall": {k: v - got.get(k, 0) for k, v in config.quota.items() if v > got.get(k, 0)},
        "out_of_image": [o.id for o in outside],
        "kept": [o.id for o in plan.kept],
        "rejections": [{"object_id": i, "reason": r} for i, r in plan.rejected],
        "blend": [[kind, radius] for kind, radius in modes],
    }
    fixture = transform_fixture(bundle.fixture, flow) if bundle.fixture else None
    return out, meta, fixture


# --------------------------------------------------------------------------
# batch driver

_STATE: dict = {}


def _init_worker(scenes_dir, masks_dir, db_dir, out_dir, config_dict):
    _STATE.update(
        scenes_dir=scenes_dir, masks_dir=masks_dir, out_dir=Path(out_dir),
        db=GtDatabase.load(db_dir), config=RunConfig.from_dict(config_dict),
    )


def _process(scene_id: str) -> dict:
    try:
        config = _STATE["config"]
        bundle = load_scene(_STATE["scenes_dir"], scene_id, _STATE["masks_dir"])
        scene, meta, fixture = augment_scene(bundle, _STATE["db"], config,
                                             scene_rng(config.seed, scene_id))
        write_scene_dir(_STATE["out_dir"] / scene_id, scene, meta, fixture)
        return {"scene_id": scene_id, "ok": True, "meta": meta}
    except Exception as err:  # noqa: BLE001 - per-scene failures are reported, not fatal
        logger.exception("scene %s failed", scene_id)
        return {"scene_id": scene_id, "ok": False, "error": f"{type(err).__name__}: {err}"}


def _reduce(results: list[dict], config: RunConfig) -> dict:
    stats = {
        "scenes": len(results),
        "failed": [r["scene_id"] for r in results if not r["ok"]],
        "errors": {r["scene_id"]: r["error"] for r in results if not r["ok"]},
        "sampled": 0,
        "kept": 0,
        "out_of_image": 0,
        "rejected": {r: 0 for r in REASONS},
        "shortfall": {},
        "per_threshold": {},
        "config": config.to_dict(),
    }
    for r in results:
        if not r["ok"]:
            continue
        meta = r["meta"]
        key = repr(meta["threshold"])
        bucket = stats["per_threshold"].setdefault(
            key, {"scenes": 0, "kept": 0, "rejected": {x: 0 for x in REASONS}})
        bucket["scenes"] += 1
        bucket["kept"] += len(meta["kept"])
        stats["sampled"] += len(meta["sampled"])
        stats["kept"] += len(meta["kept"])
        stats["out_of_image"] += len(meta["out_of_image"])
        for rej in meta["rejections"]:
            stats["rejected"][rej["reason"]] += 1
            bucket["rejected"][rej["reason"]] += 1
        for k, v in meta["shortfall"].items():
            stats["shortfall"][k] = stats["shortfall"].get(k, 0) + v
    stats["per_threshold"] = dict(sorted(stats["per_threshold"].items()))
    return stats


def run_augment(config: RunConfig, scenes_dir, db_dir, out_dir, masks_dir=None,
                ids: Optional[list[str]] = None) -> dict:
    """Augment every scene of ``scenes_dir`` into ``out_dir/<id>/``; write ``stats.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = scene_ids(scenes_dir) if ids is None else list(ids)
    init = (str(scenes_dir), None if masks_dir is None else str(masks_dir), str(db_dir),
            str(out_dir), config.to_dict())
    if config.workers > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=config.workers, initializer=_init_worker,
                                 initargs=init) as pool:
            results = list(pool.map(_process, ids, chunksize=max(1, len(ids) // (4 * config.workers))))
    else:
        _init_worker(*init)
        results = [_process(sid) for sid in ids]
    stats = _reduce(results, config)
    dump_json(out_dir / "stats.json", stats)
    return stats


# --------------------------------------------------------------------------
# verification


def verify_consistency(scene_dir, tolerance: float = 1e-6) -> dict:
    """Compare reverse-and-replay correspondences with the scene's fixture pixels."""
    scene, _, fixture = read_scene_dir(scene_dir)
    if fixture is None:
        raise FileNotFoundError(f"{scene_dir}: no fixture.json")
    points, truth = fixture_arrays(fixture)
    got = correspond_points(points, scene.flow, scene.calib, strict=False)
    du = np.abs(got[:, 0] - truth[:, 0])
    dv = np.abs(got[:, 1] - truth[:, 1])
    behind = ~np.isfinite(du) | ~np.isfinite(dv)
    err = np.maximum(du, dv)
    violations = []
    for i in np.flatnonzero(behind | (err > tolerance)):
        violations.append({"index": int(i), "behind_camera": bool(behind[i]),
                           "du": None if behind[i] else float(du[i]),
                           "dv": None if behind[i] else float(dv[i])})
    finite = ~behind
    return {
        "scene": str(scene_dir),
        "n_points": int(len(points)),
        "max_du": float(du[finite].max()) if finite.any() else 0.0,
        "max_dv": float(dv[finite].max()) if finite.any() else 0.0,
        "max_error": float(err[finite].max()) if finite.any() else 0.0,
        "behind_camera": int(behind.sum()),
        "tolerance": tolerance,
        "ok": not violations,
        "violations": violations,
    }


def load_config_file(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
