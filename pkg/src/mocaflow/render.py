"""PNG views of an augmented scene directory."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .geometry import bev_corners
from .io.scene_dir import read_scene_dir
from .scene import PASTED

ORIGINAL_COLOR = (128, 128, 128)
PASTED_COLOR = (255, 0, 0)
LEGEND_HEIGHT = 16


def _legend(width: int) -> Image.Image:
    band = Image.new("RGB", (width, LEGEND_HEIGHT), (255, 255, 255))
    draw = ImageDraw.Draw(band)
    draw.rectangle([4, 4, 12, 11], outline=ORIGINAL_COLOR)
    draw.text((16, 2), "original", fill=(0, 0, 0))
    draw.rectangle([80, 4, 88, 11], outline=PASTED_COLOR)
    draw.text((92, 2), "pasted", fill=(0, 0, 0))
    return band


def render_image_overlay(scene) -> np.ndarray:
    """Scene image with 2D boxes on top and a legend band appended below.

    Box outlines are drawn on the pixels containing the box edges; the image
    rows above the legend are otherwise the scene image unchanged.
    """
    width, height = scene.image_size
    canvas = Image.new("RGB", (width, height + LEGEND_HEIGHT))
    canvas.paste(Image.fromarray(scene.image), (0, 0))
    draw = ImageDraw.Draw(canvas)
    # originals first so pasted outlines stay visible where they cross
    for inst in sorted(scene.originals, key=lambda o: o.provenance == PASTED):
        b = inst.box2d
        rect = [int(np.floor(b.x_min)), int(np.floor(b.y_min)),
                int(np.floor(b.x_max)), int(np.floor(b.y_max))]
        color = PASTED_COLOR if inst.provenance == PASTED else ORIGINAL_COLOR
        draw.rectangle(rect, outline=color)
    canvas.paste(_legend(width), (0, height))
    return np.asarray(canvas)


def render_bev(scene, resolution: float = 0.1, x_range=(-10.0, 70.0),
               y_range=(-40.0, 40.0)) -> np.ndarray:
    """Top-down raster: x grows upwards, y grows to the left, as seen from above."""
    w = int(round((y_range[1] - y_range[0]) / resolution))
    h = int(round((x_range[1] - x_range[0]) / resolution))

    def to_px(xy):
        col = (y_range[1] - xy[:, 1]) / resolution
        row = (x_range[1] - xy[:, 0]) / resolution
        return np.column_stack([col, row])

    canvas = np.zeros((h, w, 3), dtype=np.uint8)
    pts = to_px(np.asarray(scene.cloud[:, :2], dtype=np.float64)).astype(np.int64)
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
    canvas[pts[ok, 1], pts[ok, 0]] = (200, 200, 200)
    img = Image.fromarray(canvas)
    draw = ImageDraw.Draw(img)
    for inst in sorted(scene.originals, key=lambda o: o.provenance == PASTED):
        poly = [tuple(p) for p in to_px(bev_corners(inst.box3d))]
        color = PASTED_COLOR if inst.provenance == PASTED else ORIGINAL_COLOR
        draw.polygon(poly, outline=color)
    return np.asarray(img)


def render(scene_dir, out_png, view: str = "image_overlay") -> np.ndarray:
    scene, _, _ = read_scene_dir(scene_dir)
    if view == "image_overlay":
        arr = render_image_overlay(scene)
    elif view == "bev":
        arr = render_bev(scene)
    else:
        raise ValueError(f"unknown view {view!r}")
    Path(out_png).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(out_png, format="PNG")
    return arr
