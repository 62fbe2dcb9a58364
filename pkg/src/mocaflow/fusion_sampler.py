"""Aligned image-feature sampling at projected point locations.

A feature map ``U`` of shape ``(H, W, C)`` is sampled at continuous cell
coordinates ``(px, py)`` with the tent kernel

    sum_n sum_m U[n, m] * max(0, 1 - |px - m|) * max(0, 1 - |py - n|)

where ``m`` runs over columns and ``n`` over rows. Only the 2x2 neighbourhood
of ``(px, py)`` has non-zero weight, which is all this module visits. Cells
outside the grid contribute nothing, so the kernel fades to zero past the
border instead of clamping.

The quantized variant reads the single nearest cell and is kept as the
misaligned baseline.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AtKink

KINK_DISTANCE = 1e-3


@dataclass(frozen=True, eq=False)
class FeatureMap:
    data: np.ndarray  # (H, W, C) float32
    stride: int = 1

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"feature map must be (H, W, C) with positive sizes, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map holds non-finite values")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "stride", int(self.stride))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    levels: tuple[FeatureMap, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("pyramid needs at least one level")
        strides = [lv.stride for lv in levels]
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ValueError(f"strides must increase strictly, got {strides}")
        object.__setattr__(self, "levels", levels)

    @property
    def channels(self) -> int:
        return sum(lv.data.shape[2] for lv in self.levels)


def _tent(p: float, k: int) -> float:
    return max(0.0, 1.0 - abs(p - k))


def _sample64(fmap: FeatureMap, px: float, py: float) -> np.ndarray:
    h, w, c = fmap.data.shape
    m0, n0 = math.floor(px), math.floor(py)
    acc = np.zeros(c, dtype=np.float64)
    for n in (n0, n0 + 1):
        if n < 0 or n >= h:
            continue
        wy = _tent(py, n)
        for m in (m0, m0 + 1):
            if m < 0 or m >= w:
                continue
            acc = acc + fmap.data[n, m].astype(np.float64) * _tent(px, m) * wy
    return acc


def bilinear_sample(fmap: FeatureMap, p: Sequence[float]) -> np.ndarray:
    """Tent-kernel sample at ``p = (px, py)``; returns a float32 C-vector."""
    px, py = float(p[0]), float(p[1])
    if not (math.isfinite(px) and math.isfinite(py)):
        raise ValueError("sample coordinates must be finite")
    return _sample64(fmap, px, py).astype(np.float32)


def bilinear_sample_batch(fmap: FeatureMap, coords: np.ndarray, workers: int = 1) -> np.ndarray:
    """Vectorised :func:`bilinear_sample` over ``(N, 2)`` coordinates, output ``(N, C)``.

    ``workers > 1`` splits the rows across threads; the output row order
    always matches the input.
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if workers > 1 and coords.shape[0] >= 2 * workers:
        chunks = np.array_split(coords, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.vstack(list(pool.map(lambda ch: bilinear_sample_batch(fmap, ch), chunks)))
    h, w, c = fmap.data.shape
    px, py = coords[:, 0], coords[:, 1]
    m0 = np.floor(px).astype(np.int64)
    n0 = np.floor(py).astype(np.int64)
    acc = np.zeros((coords.shape[0], c), dtype=np.float64)
    for dn in (0, 1):
        n = n0 + dn
        wy = np.maximum(0.0, 1.0 - np.abs(py - n))
        for dm in (0, 1):
            m = m0 + dm
            wx = np.maximum(0.0, 1.0 - np.abs(px - m))
            ok = (n >= 0) & (n < h) & (m >= 0) & (m < w)
            vals = np.zeros((coords.shape[0], c), dtype=np.float64)
            vals[ok] = fmap.data[n[ok], m[ok]]
            acc = acc + vals * wx[:, None] * wy[:, None]
    return acc.astype(np.float32)


def _dtent(p: float, k: int) -> float:
    d = p - k
    if abs(d) >= 1.0:
        return 0.0
    return -math.copysign(1.0, d)


def bilinear_sample_grad(fmap: FeatureMap, p: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(d/dpx, d/dpy)`` of :func:`bilinear_sample`, in float64.

    The kernel is not differentiable at integer coordinates, so ``p`` must
    keep at least 1e-3 away from them.
    """
    px, py = float(p[0]), float(p[1])
    for q in (px, py):
        if abs(q - round(q)) < KINK_DISTANCE:
            raise AtKink(f"coordinate {q!r} is within {KINK_DISTANCE} of an integer")
    h, w, c = fmap.data.shape
    m0, n0 = math.floor(px), math.floor(py)
    gx = np.zeros(c, dtype=np.float64)
    gy = np.zeros(c, dtype=np.float64)
    for n in (n0, n0 + 1):
        if n < 0 or n >= h:
            continue
        for m in (m0, m0 + 1):
            if m < 0 or m >= w:
                continue
            u = fmap.data[n, m].astype(np.float64)
            gx += u * _dtent(px, m) * _tent(py, n)
            gy += u * _tent(px, m) * _dtent(py, n)
    return gx, gy


def bilinear_sample_grad_map(fmap: FeatureMap, p: Sequence[float]) -> np.ndarray:
    """Gradient of the sample with respect to ``U``: the kernel weights, shape (H, W)."""
    px, py = float(p[0]), float(p[1])
    h, w, _ = fmap.data.shape
    out = np.zeros((h, w), dtype=np.float64)
    m0, n0 = math.floor(px), math.floor(py)
    for n in (n0, n0 + 1):
        for m in (m0, m0 + 1):
            if 0 <= n < h and 0 <= m < w:
                out[n, m] = _tent(px, m) * _tent(py, n)
    return out


def quantized_sample(fmap: FeatureMap, p: Sequence[float]) -> np.ndarray:
    """Nearest-cell lookup (halves round up), clamped to the grid."""
    px, py = float(p[0]), float(p[1])
    if not (math.isfinite(px) and math.isfinite(py)):
        raise ValueError("sample coordinates must be finite")
    h, w, _ = fmap.data.shape
    m = min(max(math.floor(px + 0.5), 0), w - 1)
    n = min(max(math.floor(py + 0.5), 0), h - 1)
    return fmap.data[n, m].copy()


def quantized_sample_batch(fmap: FeatureMap, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    h, w, _ = fmap.data.shape
    m = np.clip(np.floor(coords[:, 0] + 0.5), 0, w - 1).astype(np.int64)
    n = np.clip(np.floor(coords[:, 1] + 0.5), 0, h - 1).astype(np.int64)
    return fmap.data[n, m]


def pyramid_sample(pyr: FeaturePyramid, p_img) -> np.ndarray:
    """Sample every level at the pixel divided by its stride and concatenate."""
    u, v = (p_img.u, p_img.v) if hasattr(p_img, "u") else (float(p_img[0]), float(p_img[1]))
    return np.concatenate([bilinear_sample(lv, (u / lv.stride, v / lv.stride)) for lv in pyr.levels])


def pyramid_sample_batch(pyr: FeaturePyramid, pixels: np.ndarray, workers: int = 1) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, pixels.shape[-1])[:, :2]
    return np.hstack([bilinear_sample_batch(lv, pixels / lv.stride, workers) for lv in pyr.levels])
