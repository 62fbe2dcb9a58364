"""Scene containers shared by the database builder, the paste engine and the CLI."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Box2D, Box3D, CalibrationChain, KittiCalibration, Mask2D
from .transform_flow import TransformFlow

ORIGINAL = "original"
PASTED = "pasted"


@dataclass(frozen=True)
class Instance:
    """One labelled object present in a scene."""

    box3d: Box3D
    box2d: Box2D
    label: str
    provenance: str = ORIGINAL
    source_id: Optional[int] = None  # database object id for pasted instances

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "provenance": self.provenance,
            "box3d": self.box3d.to_dict(),
            "box2d": list(self.box2d.as_tuple()),
        }
        if self.source_id is not None:
            d["source_id"] = self.source_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        return cls(Box3D.from_dict(d["box3d"]), Box2D(*d["box2d"]), d["label"],
                   d.get("provenance", ORIGINAL), d.get("source_id"))


@dataclass(frozen=True, eq=False)
class Annotation:
    """Ground-truth label as read from disk, including the instance mask."""

    box3d: Box3D
    box2d: Box2D
    label: str
    mask: Optional[Mask2D] = None
    truncated: float = 0.0
    occluded: int = 0


@dataclass(frozen=True, eq=False)
class Scene:
    cloud: np.ndarray  # (N, 4) float32
    image: np.ndarray  # (H, W, 3) uint8
    calib: CalibrationChain
    originals: tuple[Instance, ...] = ()
    flow: TransformFlow = field(default_factory=TransformFlow)

    def __post_init__(self):
        object.__setattr__(self, "originals", tuple(self.originals))
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise ValueError(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
        if isinstance(self.calib, KittiCalibration):
            cx, cy = self.calib.P_rect[0, 2], self.calib.P_rect[1, 2]
            if not (0 <= cx < img.shape[1] and 0 <= cy < img.shape[0]):
                warnings.warn(f"principal point ({cx}, {cy}) lies outside the "
                              f"{img.shape[1]}x{img.shape[0]} image", stacklevel=2)

    @property
    def image_size(self) -> tuple[int, int]:
        """(width, height)"""
        return self.image.shape[1], self.image.shape[0]

    def replace(self, **changes) -> "Scene":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class SceneBundle:
    id: str
    scene: Scene
    annotations: tuple[Annotation, ...] = ()
    fixture: Optional[dict] = None  # {"points": [[x, y, z]], "pixels": [[u, v, depth]]}
