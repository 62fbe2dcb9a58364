"""Geometric primitives and LiDAR-to-image projection.

Coordinate conventions:

* LiDAR frame: x forward, y left, z up, meters.
* A :class:`Box3D` is centred at its geometric centre. Its length ``l`` runs
  along the heading (local x after rotating by ``yaw``), its width ``w`` along
  local y and its height ``h`` along z.
* Pixel coordinates ``(u, v)`` are continuous, ``u`` to the right and ``v``
  downwards.

Point clouds are plain ``(N, 4)`` arrays of ``(x, y, z, intensity)``; clouds
read from disk are float32, everything computed here is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DepthNonPositive

MIN_DEPTH = 1e-6
ORTHO_TOL = 1e-6


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]. Angles already in range are returned unchanged."""
    angle = float(angle)
    if -math.pi < angle <= math.pi:
        return angle
    angle = math.fmod(angle, 2 * math.pi)
    if angle <= -math.pi:
        angle += 2 * math.pi
    elif angle > math.pi:
        angle -= 2 * math.pi
    return angle


def validate_cloud(cloud: np.ndarray) -> np.ndarray:
    """Check the point-cloud invariants and return the cloud unchanged."""
    cloud = np.asarray(cloud)
    if cloud.ndim != 2 or cloud.shape[1] != 4:
        raise ValueError(f"point cloud must be (N, 4), got {cloud.shape}")
    if not np.all(np.isfinite(cloud)):
        raise ValueError("point cloud contains non-finite values")
    inten = cloud[:, 3]
    if inten.size and (inten.min() < 0 or inten.max() > 1):
        raise ValueError("intensity must lie in [0, 1]")
    return cloud


@dataclass(frozen=True)
class Box3D:
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # (w, l, h)
    yaw: float = 0.0

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("Box3D needs a 3-vector center and (w, l, h) size")
        if not all(math.isfinite(c) for c in center + size + (self.yaw,)):
            raise ValueError("Box3D fields must be finite")
        if min(size) <= 0:
            raise ValueError(f"Box3D sizes must be positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def w(self) -> float:
        return self.size[0]

    @property
    def l(self) -> float:  # noqa: E743
        return self.size[1]

    @property
    def h(self) -> float:
        return self.size[2]

    def to_dict(self) -> dict:
        return {"center": list(self.center), "size": list(self.size), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "Box3D":
        return cls(tuple(d["center"]), tuple(d["size"]), d["yaw"])


@dataclass(frozen=True)
class Box2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = [float(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("Box2D coordinates must be finite")
        if not (vals[0] < vals[2] and vals[1] < vals[3]):
            raise ValueError(f"degenerate Box2D {tuple(vals)}")
        for name, v in zip(("x_min", "y_min", "x_max", "y_max"), vals):
            object.__setattr__(self, name, v)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True, eq=False)
class Mask2D:
    """Binary mask whose bitmap pixel ``[r, c]`` covers image pixel ``(x0 + c, y0 + r)``."""

    origin: tuple[int, int]
    bitmap: np.ndarray

    def __post_init__(self):
        bitmap = np.asarray(self.bitmap, dtype=bool)
        if bitmap.ndim != 2 or bitmap.size == 0 or not bitmap.any():
            raise ValueError("mask bitmap must be a non-empty 2D grid with a set pixel")
        bitmap = bitmap.copy()
        bitmap.setflags(write=False)
        object.__setattr__(self, "bitmap", bitmap)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bitmap.shape

    def extent(self) -> tuple[int, int, int, int]:
        """Pixel rectangle ``(x0, y0, x1, y1)`` covered by the bitmap, exclusive end."""
        x0, y0 = self.origin
        h, w = self.bitmap.shape
        return x0, y0, x0 + w, y0 + h

    def set_bounds(self) -> tuple[int, int, int, int]:
        """Continuous bounding box of the set pixels, ``(x0, y0, x1, y1)``."""
        rows = np.flatnonzero(self.bitmap.any(axis=1))
        cols = np.flatnonzero(self.bitmap.any(axis=0))
        x0, y0 = self.origin
        return (x0 + int(cols[0]), y0 + int(rows[0]),
                x0 + int(cols[-1]) + 1, y0 + int(rows[-1]) + 1)

    def __eq__(self, other):
        if not isinstance(other, Mask2D):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.bitmap, other.bitmap)

    __hash__ = None


@dataclass(frozen=True)
class PixelCoord:
    u: float
    v: float
    depth: float


def _as_matrix(m, shape) -> np.ndarray:
    arr = np.array(m, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"expected matrix of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("calibration matrices must be finite")
    arr.setflags(write=False)
    return arr


def _check_rotation(r: np.ndarray, name: str) -> None:
    err = np.abs(r @ r.T - np.eye(3)).max()
    if err >= ORTHO_TOL:
        raise ValueError(f"{name}: rotation block not orthonormal (|RR^T - I| = {err:.3g})")


def _check_homogeneous(m: np.ndarray, name: str) -> None:
    if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError(f"{name}: bottom row must be (0, 0, 0, 1), got {m[3]}")


@dataclass(frozen=True, eq=False)
class KittiCalibration:
    """KITTI chain ``P_rect @ R_rect @ T_cam_from_lidar``."""

    P_rect: np.ndarray
    R_rect: np.ndarray
    T_cam_from_lidar: np.ndarray

    variant = "kitti"

    def __post_init__(self):
        p = _as_matrix(self.P_rect, (3, 4))
        r = _as_matrix(self.R_rect, (4, 4))
        t = _as_matrix(self.T_cam_from_lidar, (4, 4))
        _check_homogeneous(r, "R_rect")
        if not np.array_equal(r[:3, 3], [0.0, 0.0, 0.0]):
            raise ValueError("R_rect must be a pure rotation")
        _check_rotation(r[:3, :3], "R_rect")
        _check_homogeneous(t, "T_cam_from_lidar")
        _check_rotation(t[:3, :3], "T_cam_from_lidar")
        object.__setattr__(self, "P_rect", p)
        object.__setattr__(self, "R_rect", r)
        object.__setattr__(self, "T_cam_from_lidar", t)

    def lidar_to_rect(self, xyz: np.ndarray) -> np.ndarray:
        """Rigid part of the chain: LiDAR points to rectified camera frame, (N, 3)."""
        hom = _homogeneous(xyz)
        return (hom @ self.T_cam_from_lidar.T @ self.R_rect.T)[:, :3]

    def rect_to_lidar(self, xyz: np.ndarray) -> np.ndarray:
        m = self.R_rect @ self.T_cam_from_lidar
        return (_homogeneous(xyz) @ np.linalg.inv(m).T)[:, :3]

    def __eq__(self, other):
        if not isinstance(other, KittiCalibration):
            return NotImplemented
        return (np.array_equal(self.P_rect, other.P_rect)
                and np.array_equal(self.R_rect, other.R_rect)
                and np.array_equal(self.T_cam_from_lidar, other.T_cam_from_lidar))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NuScenesCalibration:
    """nuScenes chain ``K @ T_cam_from_ego @ T_egoC_from_egoL @ T_ego_from_lidar``.

    The middle transform bridges the ego pose at the LiDAR timestamp and the
    ego pose at the camera timestamp.
    """

    T_ego_from_lidar: np.ndarray
    T_egoC_from_egoL: np.ndarray
    T_cam_from_ego: np.ndarray
    K: np.ndarray

    variant = "nuscenes"

    def __post_init__(self):
        for name in ("T_ego_from_lidar", "T_egoC_from_egoL", "T_cam_from_ego"):
            m = _as_matrix(getattr(self, name), (4, 4))
            _check_homogeneous(m, name)
            _check_rotation(m[:3, :3], name)
            object.__setattr__(self, name, m)
        object.__setattr__(self, "K", _as_matrix(self.K, (3, 3)))

    def __eq__(self, other):
        if not isinstance(other, NuScenesCalibration):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n))
                   for n in ("T_ego_from_lidar", "T_egoC_from_egoL", "T_cam_from_ego", "K"))

    __hash__ = None


CalibrationChain = Union[KittiCalibration, NuScenesCalibration]


def _homogeneous(xyz: np.ndarray) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    return np.hstack([xyz, np.ones((xyz.shape[0], 1))])


def _divide(hom: np.ndarray, strict: bool) -> np.ndarray:
    depth = hom[:, 2]
    bad = depth <= MIN_DEPTH
    if strict and bad.any():
        raise DepthNonPositive(float(depth[np.argmax(bad)]))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = hom[:, 0] / depth
        v = hom[:, 1] / depth
    out = np.stack([u, v, depth], axis=1)
    out[bad, :2] = np.nan
    return out


def project_points(xyz: np.ndarray, calib: CalibrationChain, strict: bool = True) -> np.ndarray:
    """Project LiDAR points to ``(u, v, depth)`` rows.

    With ``strict=False`` points at depth <= 1e-6 get NaN pixel coordinates
    instead of raising :class:`DepthNonPositive`.
    """
    hom = _homogeneous(xyz)
    if isinstance(calib, KittiCalibration):
        cam = hom @ calib.T_cam_from_lidar.T
        cam = cam @ calib.R_rect.T
        img = cam @ calib.P_rect.T
    elif isinstance(calib, NuScenesCalibration):
        cam = hom @ calib.T_ego_from_lidar.T
        cam = cam @ calib.T_egoC_from_egoL.T
        cam = cam @ calib.T_cam_from_ego.T
        img = cam[:, :3] @ calib.K.T
    else:
        raise TypeError(f"unsupported calibration {type(calib).__name__}")
    return _divide(img, strict)


def project_kitti(point: Sequence[float], calib: KittiCalibration) -> PixelCoord:
    if not isinstance(calib, KittiCalibration):
        raise TypeError("project_kitti needs a KittiCalibration")
    u, v, d = project_points(point, calib)[0]
    return PixelCoord(float(u), float(v), float(d))


def project_nuscenes(point: Sequence[float], calib: NuScenesCalibration) -> PixelCoord:
    if not isinstance(calib, NuScenesCalibration):
        raise TypeError("project_nuscenes needs a NuScenesCalibration")
    u, v, d = project_points(point, calib)[0]
    return PixelCoord(float(u), float(v), float(d))


def project(point: Sequence[float], calib: CalibrationChain) -> PixelCoord:
    """Project one point with whichever chain ``calib`` is."""
    u, v, d = project_points(point, calib)[0]
    return PixelCoord(float(u), float(v), float(d))


# ---------------------------------------------------------------------------
# oriented boxes


def _rot2(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def box3d_corners(box: Box3D) -> np.ndarray:
    """Eight corners as an (8, 3) array.

    Rows 0-3 are the bottom face counter-clockwise seen from above, rows 4-7
    the top face in the same order.
    """
    hl, hw, hh = box.l / 2, box.w / 2, box.h / 2
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    bev = local @ _rot2(box.yaw).T + np.array(box.center[:2])
    cz = box.center[2]
    bottom = np.column_stack([bev, np.full(4, cz - hh)])
    top = np.column_stack([bev, np.full(4, cz + hh)])
    return np.vstack([bottom, top])


def bev_corners(box: Box3D) -> np.ndarray:
    return box3d_corners(box)[:4, :2]


def boxes_to_bev_array(boxes: Iterable[Box3D]) -> np.ndarray:
    """Pack boxes as (M, 5) rows ``(cx, cy, l, w, yaw)`` for the vectorised tests."""
    rows = [(b.center[0], b.center[1], b.l, b.w, b.yaw) for b in boxes]
    return np.array(rows, dtype=np.float64).reshape(-1, 5)


def bev_overlap_many(box: Box3D, others: np.ndarray) -> np.ndarray:
    """Separating-axis overlap of one box against packed ``others`` (see
    :func:`boxes_to_bev_array`). Touching footprints do not overlap."""
    others = np.asarray(others, dtype=np.float64).reshape(-1, 5)
    if others.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    ca, sa = math.cos(box.yaw), math.sin(box.yaw)
    cb, sb = np.cos(others[:, 4]), np.sin(others[:, 4])
    dx = others[:, 0] - box.center[0]
    dy = others[:, 1] - box.center[1]
    hla, hwa = box.l / 2, box.w / 2
    hlb, hwb = others[:, 2] / 2, others[:, 3] / 2

    # cosines between the local axes of a and b
    xx = np.abs(ca * cb + sa * sb)   # a.x . b.x
    xy = np.abs(-ca * sb + sa * cb)  # a.x . b.y
    yx = np.abs(-sa * cb + ca * sb)  # a.y . b.x
    yy = np.abs(sa * sb + ca * cb)   # a.y . b.y

    sep = np.abs(dx * ca + dy * sa) >= hla + hlb * xx + hwb * xy
    sep |= np.abs(-dx * sa + dy * ca) >= hwa + hlb * yx + hwb * yy
    sep |= np.abs(dx * cb + dy * sb) >= hlb + hla * xx + hwa * yx
    sep |= np.abs(-dx * sb + dy * cb) >= hwb + hla * xy + hwa * yy
    return ~sep


def bev_overlap(a: Box3D, b: Box3D) -> bool:
    """True when the BEV footprints of ``a`` and ``b`` share positive area."""
    return bool(bev_overlap_many(a, boxes_to_bev_array([b]))[0])


def points_in_box3d(cloud: np.ndarray, box: Box3D) -> np.ndarray:
    """Indices of points strictly inside ``box``."""
    return np.flatnonzero(points_in_box3d_mask(cloud, box))


def points_in_box3d_mask(cloud: np.ndarray, box: Box3D) -> np.ndarray:
    pts = np.asarray(cloud)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    pts = pts[:, :3].astype(np.float64)
    dx = pts[:, 0] - box.center[0]
    dy = pts[:, 1] - box.center[1]
    dz = pts[:, 2] - box.center[2]
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (np.abs(lx) < box.l / 2) & (np.abs(ly) < box.w / 2) & (np.abs(dz) < box.h / 2)


def points_in_any_box(cloud: np.ndarray, boxes: Iterable[Box3D]) -> np.ndarray:
    inside = np.zeros(np.asarray(cloud).shape[0], dtype=bool)
    for box in boxes:
        inside |= points_in_box3d_mask(cloud, box)
    return inside
