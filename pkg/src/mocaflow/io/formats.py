"""Binary and image file formats.

All binary numbers are little-endian. Point files are a flat float32 stream of
``(x, y, z, intensity)`` records, 16 bytes each. Feature maps are a 16-byte
header of four u32 ``(H, W, C, stride)`` followed by row-major float32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import TruncatedBinary

POINT_DTYPE = np.dtype("<f4")
FEATURE_HEADER = struct.Struct("<4I")


def read_points_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise TruncatedBinary(path, len(raw))
    return np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, 4).astype(np.float32)


def write_points_bin(path, cloud: np.ndarray) -> None:
    arr = np.ascontiguousarray(cloud, dtype=POINT_DTYPE).reshape(-1, 4)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(arr.tobytes())


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im)


def write_png(path, array: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # PIL writes no timestamp chunks, so identical arrays give identical bytes
    Image.fromarray(np.ascontiguousarray(array)).save(path, format="PNG", compress_level=6)


def read_feature_map_bytes(raw: bytes):
    from ..fusion_sampler import FeatureMap

    if len(raw) < FEATURE_HEADER.size:
        raise TruncatedBinary("<feature map>", len(raw), FEATURE_HEADER.size)
    h, w, c, stride = FEATURE_HEADER.unpack_from(raw)
    body = raw[FEATURE_HEADER.size:]
    if len(body) != h * w * c * 4:
        raise ValueError(f"feature map body has {len(body)} bytes, header says {h}x{w}x{c} float32")
    data = np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float32)
    return FeatureMap(data, stride)


def feature_map_bytes(fmap) -> bytes:
    h, w, c = fmap.data.shape
    return FEATURE_HEADER.pack(h, w, c, int(fmap.stride)) + \
        np.ascontiguousarray(fmap.data, dtype="<f4").tobytes()


def read_feature_map(path):
    return read_feature_map_bytes(Path(path).read_bytes())


def write_feature_map(path, fmap) -> None:
    Path(path).write_bytes(feature_map_bytes(fmap))
