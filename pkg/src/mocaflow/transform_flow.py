"""Invertible augmentation records and reverse-and-replay correspondence.

Point transforms move the LiDAR sensor, image transforms move pixels; the two
lists are recorded independently. A point in the augmented cloud finds its
pixel in the augmented image by undoing the point transforms (last first),
projecting with the untouched calibration, and re-applying the image
transforms in their original order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from PIL import Image

from .geometry import Box2D, Box3D, CalibrationChain, PixelCoord, project_points

# --------------------------------------------------------------------------
# point transforms


@dataclass(frozen=True)
class Flip:
    """Mirror the cloud by negating one coordinate."""

    axis: str

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"Flip axis must be 'x' or 'y', got {self.axis!r}")

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        out = xyz.copy()
        col = 0 if self.axis == "x" else 1
        out[:, col] = -out[:, col]
        return out

    def inverse(self) -> "Flip":
        return self

    def apply_box(self, box: Box3D) -> Box3D:
        x, y, z = box.center
        if self.axis == "y":
            return Box3D((x, -y, z), box.size, -box.yaw)
        return Box3D((-x, y, z), box.size, math.pi - box.yaw)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[0 if self.axis == "x" else 1, 0 if self.axis == "x" else 1] = -1.0
        return m

    def params(self) -> dict:
        return {"axis": self.axis}


@dataclass(frozen=True)
class RotateZ:
    """Rotate about the vertical axis through the LiDAR origin."""

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError("rotation angle must be finite")
        object.__setattr__(self, "angle", float(self.angle))

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        out = xyz.copy()
        out[:, 0] = c * xyz[:, 0] - s * xyz[:, 1]
        out[:, 1] = s * xyz[:, 0] + c * xyz[:, 1]
        return out

    def inverse(self) -> "RotateZ":
        return RotateZ(-self.angle)

    def apply_box(self, box: Box3D) -> Box3D:
        center = self.apply(np.array([box.center], dtype=np.float64))[0]
        return Box3D(tuple(center), box.size, box.yaw + self.angle)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        m = np.eye(4)
        m[:2, :2] = [[c, -s], [s, c]]
        return m

    def params(self) -> dict:
        return {"angle": self.angle}


@dataclass(frozen=True)
class Scale:
    factor: float

    def __post_init__(self):
        if not (math.isfinite(self.factor) and self.factor > 0):
            raise ValueError(f"scale factor must be positive, got {self.factor}")
        object.__setattr__(self, "factor", float(self.factor))

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        return xyz * self.factor

    def inverse(self) -> "Scale":
        return Scale(1.0 / self.factor)

    def apply_box(self, box: Box3D) -> Box3D:
        f = self.factor
        return Box3D(tuple(c * f for c in box.center), tuple(s * f for s in box.size), box.yaw)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] *= self.factor
        return m

    def params(self) -> dict:
        return {"factor": self.factor}


@dataclass(frozen=True)
class Translate:
    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError("translation must be finite")
            object.__setattr__(self, name, v)

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        return xyz + np.array([self.dx, self.dy, self.dz])

    def inverse(self) -> "Translate":
        return Translate(-self.dx, -self.dy, -self.dz)

    def apply_box(self, box: Box3D) -> Box3D:
        x, y, z = box.center
        return Box3D((x + self.dx, y + self.dy, z + self.dz), box.size, box.yaw)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, 3] = [self.dx, self.dy, self.dz]
        return m

    def params(self) -> dict:
        return {"dx": self.dx, "dy": self.dy, "dz": self.dz}


PointTransform = Union[Flip, RotateZ, Scale, Translate]

# --------------------------------------------------------------------------
# image transforms


@dataclass(frozen=True)
class HFlip:
    """Horizontal mirror of an image that is ``image_width`` pixels wide at this stage."""

    image_width: int

    def __post_init__(self):
        if int(self.image_width) != self.image_width or self.image_width < 1:
            raise ValueError("HFlip needs a positive integer width")
        object.__setattr__(self, "image_width", int(self.image_width))

    def apply_pixels(self, uv: np.ndarray) -> np.ndarray:
        out = uv.copy()
        out[:, 0] = self.image_width - 1 - uv[:, 0]
        return out

    def apply_image(self, image: np.ndarray) -> np.ndarray:
        if image.shape[1] != self.image_width:
            raise ValueError(f"HFlip recorded width {self.image_width}, image is {image.shape[1]}")
        return np.ascontiguousarray(image[:, ::-1])

    def apply_box(self, box: Box2D) -> Box2D:
        w1 = self.image_width - 1
        return Box2D(w1 - box.x_max, box.y_min, w1 - box.x_min, box.y_max)

    def matrix(self) -> np.ndarray:
        return np.array([[-1.0, 0.0, self.image_width - 1.0], [0, 1, 0], [0, 0, 1]])

    def params(self) -> dict:
        return {"image_width": self.image_width}


@dataclass(frozen=True)
class Resize:
    """Isotropic rescale: pixel coordinates are multiplied by ``scale``."""

    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"resize scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    def apply_pixels(self, uv: np.ndarray) -> np.ndarray:
        out = uv.copy()
        out[:, :2] = uv[:, :2] * self.scale
        return out

    def output_size(self, width: int, height: int) -> tuple[int, int]:
        return max(1, int(round(width * self.scale))), max(1, int(round(height * self.scale)))

    def apply_image(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        size = self.output_size(w, h)
        return np.asarray(Image.fromarray(image).resize(size, Image.BILINEAR))

    def apply_box(self, box: Box2D) -> Box2D:
        s = self.scale
        return Box2D(box.x_min * s, box.y_min * s, box.x_max * s, box.y_max * s)

    def matrix(self) -> np.ndarray:
        return np.diag([self.scale, self.scale, 1.0])

    def params(self) -> dict:
        return {"scale": self.scale}


@dataclass(frozen=True)
class Pad:
    """Zero padding on the left and top; the image content shifts by the offsets."""

    left: int
    top: int

    def __post_init__(self):
        for name in ("left", "top"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError("pad offsets must be non-negative integers")
            object.__setattr__(self, name, int(v))

    def apply_pixels(self, uv: np.ndarray) -> np.ndarray:
        out = uv.copy()
        out[:, 0] = uv[:, 0] + self.left
        out[:, 1] = uv[:, 1] + self.top
        return out

    def apply_image(self, image: np.ndarray) -> np.ndarray:
        widths = [(self.top, 0), (self.left, 0)] + [(0, 0)] * (image.ndim - 2)
        return np.pad(image, widths)

    def apply_box(self, box: Box2D) -> Box2D:
        return Box2D(box.x_min + self.left, box.y_min + self.top,
                     box.x_max + self.left, box.y_max + self.top)

    def matrix(self) -> np.ndarray:
        return np.array([[1.0, 0.0, self.left], [0.0, 1.0, self.top], [0.0, 0.0, 1.0]])

    def params(self) -> dict:
        return {"left": self.left, "top": self.top}


ImageTransform = Union[HFlip, Resize, Pad]

_KINDS = {cls.__name__: cls for cls in (Flip, RotateZ, Scale, Translate, HFlip, Resize, Pad)}
_POINT_KINDS = (Flip, RotateZ, Scale, Translate)
_IMAGE_KINDS = (HFlip, Resize, Pad)


@dataclass(frozen=True)
class TransformFlow:
    """Ordered augmentation records; index 0 was applied first."""

    point_flow: tuple[PointTransform, ...] = field(default_factory=tuple)
    image_flow: tuple[ImageTransform, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pf, imf = tuple(self.point_flow), tuple(self.image_flow)
        if not all(isinstance(t, _POINT_KINDS) for t in pf):
            raise TypeError("point_flow holds only point transforms")
        if not all(isinstance(t, _IMAGE_KINDS) for t in imf):
            raise TypeError("image_flow holds only image transforms")
        object.__setattr__(self, "point_flow", pf)
        object.__setattr__(self, "image_flow", imf)

    def to_dict(self) -> dict:
        return {
            "point_flow": [{"kind": type(t).__name__, "params": t.params()} for t in self.point_flow],
            "image_flow": [{"kind": type(t).__name__, "params": t.params()} for t in self.image_flow],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformFlow":
        def build(entries, allowed):
            out = []
            for e in entries:
                kind = _KINDS.get(e["kind"])
                if kind is None or kind not in allowed:
                    raise ValueError(f"unknown transform kind {e['kind']!r}")
                out.append(kind(**e["params"]))
            return tuple(out)

        return cls(build(d.get("point_flow", []), _POINT_KINDS),
                   build(d.get("image_flow", []), _IMAGE_KINDS))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TransformFlow":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# flow application


def _xyz(cloud: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    arr = np.asarray(cloud, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr[:, :3].copy(), (arr[:, 3:] if arr.shape[1] > 3 else None)


def _reattach(xyz: np.ndarray, rest: np.ndarray | None) -> np.ndarray:
    return xyz if rest is None else np.hstack([xyz, rest])


def apply_point_flow(cloud: np.ndarray, flow: Sequence[PointTransform]) -> np.ndarray:
    """Apply point transforms in order. Extra columns (intensity) pass through.

    Accepts ``(N, 3)`` or ``(N, 4)`` arrays and returns float64.
    """
    xyz, rest = _xyz(cloud)
    for t in flow:
        xyz = t.apply(xyz)
    return _reattach(xyz, rest)


def reverse_point_flow(cloud_aug: np.ndarray, flow: Sequence[PointTransform]) -> np.ndarray:
    xyz, rest = _xyz(cloud_aug)
    for t in reversed(flow):
        xyz = t.inverse().apply(xyz)
    return _reattach(xyz, rest)


def apply_point_flow_to_boxes(boxes: Sequence[Box3D], flow: Sequence[PointTransform]) -> list[Box3D]:
    out = list(boxes)
    for t in flow:
        out = [t.apply_box(b) for b in out]
    return out


def replay_image_flow_array(uvd: np.ndarray, flow: Sequence[ImageTransform]) -> np.ndarray:
    out = np.asarray(uvd, dtype=np.float64).reshape(-1, 3).copy()
    for t in flow:
        out = t.apply_pixels(out)
    return out


def replay_image_flow(pix: PixelCoord, flow: Sequence[ImageTransform]) -> PixelCoord:
    u, v, d = replay_image_flow_array(np.array([[pix.u, pix.v, pix.depth]]), flow)[0]
    return PixelCoord(float(u), float(v), float(d))


def apply_image_flow_to_image(image: np.ndarray, flow: Sequence[ImageTransform]) -> np.ndarray:
    for t in flow:
        image = t.apply_image(image)
    return image


def apply_image_flow_to_boxes(boxes: Sequence[Box2D], flow: Sequence[ImageTransform]) -> list[Box2D]:
    out = list(boxes)
    for t in flow:
        out = [t.apply_box(b) for b in out]
    return out


def correspond_points(points_aug: np.ndarray, flow: TransformFlow, calib: CalibrationChain,
                      strict: bool = True) -> np.ndarray:
    """Vectorised :func:`correspond`, returning ``(N, 3)`` rows of ``(u, v, depth)``.

    Large inputs are processed in fixed-size chunks so the temporaries stay
    cache-resident and the cost per point does not grow with ``N``.
    """
    xyz, _ = _xyz(points_aug)
    if len(xyz) <= _CHUNK:
        return _correspond_chunk(xyz, flow, calib, strict)
    out = np.empty((len(xyz), 3))
    for start in range(0, len(xyz), _CHUNK):
        out[start:start + _CHUNK] = _correspond_chunk(xyz[start:start + _CHUNK], flow, calib, strict)
    return out


_CHUNK = 16384


def _correspond_chunk(xyz, flow, calib, strict):
    original = reverse_point_flow(xyz, flow.point_flow)
    uvd = project_points(original, calib, strict=strict)
    return replay_image_flow_array(uvd, flow.image_flow)


def correspond(point_aug: Sequence[float], flow: TransformFlow, calib: CalibrationChain) -> PixelCoord:
    """Pixel in the augmented image seen by a point of the augmented cloud."""
    u, v, d = correspond_points(np.asarray(point_aug, dtype=np.float64)[:3], flow, calib)[0]
    return PixelCoord(float(u), float(v), float(d))


def point_flow_matrix(flow: Sequence[PointTransform]) -> np.ndarray:
    """Composite 4x4 homogeneous matrix of a point flow."""
    m = np.eye(4)
    for t in flow:
        m = t.matrix() @ m
    return m


def image_flow_matrix(flow: Sequence[ImageTransform]) -> np.ndarray:
    """Composite 3x3 affine matrix acting on ``(u, v, 1)``."""
    m = np.eye(3)
    for t in flow:
        m = t.matrix() @ m
    return m


def image_size_after(width: int, height: int, flow: Sequence[ImageTransform]) -> tuple[int, int]:
    for t in flow:
        if isinstance(t, Resize):
            width, height = t.output_size(width, height)
        elif isinstance(t, Pad):
            width, height = width + t.left, height + t.top
    return width, height
