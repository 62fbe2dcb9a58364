"""Multi-modality cut and paste.

Sampled database objects are filtered against the scene in two stages: first
any whose BEV footprint collides with an existing box, then any whose 2D box
is too occluded (intersection over foreground above the drawn threshold) or
would occlude an original object beyond it. Survivors are pasted into both
the point cloud and the image at their recorded positions, farthest first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import PatchOutOfBounds
from .geometry import Box2D, Mask2D, bev_overlap_many, boxes_to_bev_array, points_in_any_box
from .gt_database import GtObject
from .scene import PASTED, Instance, Scene

DEFAULT_THRESHOLDS = (0.0, 0.3, 0.5, 0.7)

BEV_COLLISION = "BevCollision"
IOF_SELF = "IofSelf"
IOF_ORIGINAL = "IofOriginal"
REASONS = (BEV_COLLISION, IOF_SELF, IOF_ORIGINAL)


def iof(a: Box2D, b: Box2D) -> float:
    """Fraction of ``a``'s area covered by ``b``. Not symmetric."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    return (iw * ih) / a.area


def _iof_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise iof of box rows ``a`` by box rows ``b`` (broadcasting, (..., 4))."""
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    return inter / ((a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1]))


def max_iof(p: Box2D, others: Sequence[Box2D]) -> float:
    """Worst occlusion of ``p`` by any box in ``others``; 0 when there are none."""
    best = 0.0
    for q in others:
        best = max(best, iof(p, q))
    return best


def sample_threshold(values: Sequence[float], rng: np.random.Generator) -> float:
    if len(values) == 0:
        raise ValueError("threshold set is empty")
    return float(values[int(rng.integers(len(values)))])


@dataclass(frozen=True)
class PastePlan:
    threshold: float
    kept: tuple[GtObject, ...] = ()
    rejected: tuple[tuple[int, str], ...] = ()
    rng_seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "kept": [o.id for o in self.kept],
            "rejected": [{"object_id": i, "reason": r} for i, r in self.rejected],
            "rng_seed": self.rng_seed,
        }


def _rows2d(boxes: Sequence[Box2D]) -> np.ndarray:
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def _depth_order(objs: Sequence[GtObject]) -> tuple[GtObject, ...]:
    return tuple(sorted(objs, key=lambda o: (-o.depth, o.id)))


def plan_paste(scene: Scene, candidates: Sequence[GtObject], threshold: float,
               batch: bool = False, rng_seed: Optional[int] = None) -> PastePlan:
    """Decide which ``candidates`` may be pasted into ``scene``.

    Candidates are examined in the given order. One is rejected when

    * its BEV footprint overlaps an original or an already kept box
      (``BevCollision``);
    * its 2D IoF against originals and kept boxes exceeds ``threshold``, or it
      pushes a kept box's IoF above ``threshold`` (``IofSelf``);
    * it covers some original box by more than ``threshold`` (``IofOriginal``).

    With ``batch=True`` the BEV stage is unchanged but the IoF stages compare
    each survivor against all other BEV survivors at once instead of only the
    ones kept so far.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    orig_bev = boxes_to_bev_array(o.box3d for o in scene.originals)
    orig_2d = _rows2d([o.box2d for o in scene.originals])

    rejected: list[tuple[int, str]] = []
    survivors: list[GtObject] = []
    kept_bev = np.zeros((0, 5))
    for cand in candidates:
        existing = np.vstack([orig_bev, kept_bev])
        if bev_overlap_many(cand.box3d, existing).any():
            rejected.append((cand.id, BEV_COLLISION))
            continue
        if batch:
            survivors.append(cand)
            kept_bev = np.vstack([kept_bev, boxes_to_bev_array([cand.box3d])])
            continue
        row = np.array(cand.box2d.as_tuple())
        kept_2d = _rows2d([k.box2d for k in survivors])
        own = _iof_rows(row, np.vstack([orig_2d, kept_2d]))
        on_kept = _iof_rows(kept_2d, row)
        if (own > threshold).any() or (on_kept > threshold).any():
            rejected.append((cand.id, IOF_SELF))
            continue
        if (_iof_rows(orig_2d, row) > threshold).any():
            rejected.append((cand.id, IOF_ORIGINAL))
            continue
        survivors.append(cand)
        kept_bev = np.vstack([kept_bev, boxes_to_bev_array([cand.box3d])])

    if not batch:
        return PastePlan(threshold, _depth_order(survivors), tuple(rejected), rng_seed)

    surv_2d = _rows2d([s.box2d for s in survivors])
    kept = []
    for i, cand in enumerate(survivors):
        row = surv_2d[i]
        others = np.vstack([orig_2d, np.delete(surv_2d, i, axis=0)])
        if (_iof_rows(row, others) > threshold).any():
            rejected.append((cand.id, IOF_SELF))
        elif (_iof_rows(orig_2d, row) > threshold).any():
            rejected.append((cand.id, IOF_ORIGINAL))
        else:
            kept.append(cand)
    return PastePlan(threshold, _depth_order(kept), tuple(rejected), rng_seed)


# --------------------------------------------------------------------------
# compositing

BlendMode = Union[str, tuple]


def parse_blend(mode: str) -> tuple:
    """``"none"`` -> ("none", 0); ``"feather:R"`` -> ("feather", R); ``"random"`` -> ("random", 0)."""
    if isinstance(mode, tuple):
        return mode
    name, _, arg = mode.partition(":")
    if name == "none" and not arg:
        return ("none", 0)
    if name == "random" and not arg:
        return ("random", 0)
    if name == "feather":
        radius = int(arg) if arg else 1
        if radius < 1:
            raise ValueError("feather radius must be >= 1")
        return ("feather", radius)
    raise ValueError(f"unknown blend mode {mode!r}")


def draw_blend(rng: np.random.Generator) -> tuple:
    """Random blending: uniform over hard copy and feathering of 1, 2 or 3 px."""
    k = int(rng.integers(4))
    return ("none", 0) if k == 0 else ("feather", k)


def feather_alpha(bitmap: np.ndarray, radius: int) -> np.ndarray:
    """Alpha that is 1 at distance >= radius + 1 px from the mask boundary, linear below."""
    padded = np.pad(np.asarray(bitmap, dtype=bool), 1)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return np.clip(dist / (radius + 1), 0.0, 1.0)


def blend_patch(image: np.ndarray, patch: np.ndarray, mask: Mask2D,
                mode: BlendMode = "none", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Composite ``patch`` onto a copy of ``image`` at ``mask.origin``."""
    kind, radius = parse_blend(mode)
    if kind == "random":
        if rng is None:
            raise ValueError("random blending needs an rng")
        kind, radius = draw_blend(rng)
    x0, y0, x1, y1 = mask.extent()
    height, width = image.shape[:2]
    if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
        raise PatchOutOfBounds(f"patch at {(x0, y0, x1, y1)} exceeds {width}x{height} image")
    if patch.shape[:2] != mask.shape:
        raise ValueError("patch and mask are not congruent")
    out = image.copy()
    region = out[y0:y1, x0:x1]
    if kind == "none":
        region[mask.bitmap] = patch[mask.bitmap]
        return out
    alpha = feather_alpha(mask.bitmap, radius)[..., None]
    mixed = alpha * patch.astype(np.float64) + (1.0 - alpha) * region.astype(np.float64)
    region[...] = np.clip(np.rint(mixed), 0, 255).astype(np.uint8)
    return out


def resolve_blend_modes(plan: PastePlan, blend: BlendMode,
                        rng: Optional[np.random.Generator]) -> list[tuple]:
    """One concrete blend mode per kept object, in paste order."""
    kind = parse_blend(blend)
    if kind[0] != "random":
        return [kind] * len(plan.kept)
    if rng is None:
        raise ValueError("random blending needs an rng")
    return [draw_blend(rng) for _ in plan.kept]


def paste(scene: Scene, plan: PastePlan, blend: Union[BlendMode, Sequence[tuple]] = "none",
          rng: Optional[np.random.Generator] = None) -> Scene:
    """Apply ``plan`` to both modalities and return the new scene.

    ``blend`` is one mode for every object (``"none"``, ``"feather:R"``,
    ``"random"``) or an explicit per-object list as produced by
    :func:`resolve_blend_modes`.
    """
    if not plan.kept:
        return scene
    if isinstance(blend, (list, tuple)) and blend and isinstance(blend[0], tuple):
        modes = list(blend)
        if len(modes) != len(plan.kept):
            raise ValueError("need one blend mode per kept object")
    else:
        modes = resolve_blend_modes(plan, blend, rng)

    width, height = scene.image_size
    for obj in plan.kept:
        x0, y0, x1, y1 = obj.mask.extent()
        if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
            raise PatchOutOfBounds(f"object {obj.id}: patch {(x0, y0, x1, y1)} exceeds "
                                   f"{width}x{height} image")

    inside = points_in_any_box(scene.cloud, [o.box3d for o in plan.kept])
    parts = [np.asarray(scene.cloud, dtype=np.float32)[~inside]]
    parts += [np.asarray(o.points, dtype=np.float32) for o in plan.kept]
    cloud = np.ascontiguousarray(np.vstack(parts))

    image = scene.image
    for obj, mode in zip(plan.kept, modes):
        image = blend_patch(image, obj.patch, obj.mask, mode)

    pasted = tuple(Instance(o.box3d, o.box2d, o.class_label, PASTED, o.id) for o in plan.kept)
    return scene.replace(cloud=cloud, image=image, originals=scene.originals + pasted)

