"""File formats: KITTI devkit files, binary point/feature containers, scene directories."""

from .formats import (read_feature_map, read_png, read_points_bin, write_feature_map,
                      write_png, write_points_bin)
from .kitti import (calib_to_text, label_text, load_kitti_scene, load_scene, parse_calib_text,
                    parse_label_text, read_calib, scene_ids)
from .scene_dir import read_scene_dir, write_scene_dir

__all__ = [
    "calib_to_text", "label_text", "load_kitti_scene", "load_scene", "parse_calib_text",
    "parse_label_text", "read_calib", "read_feature_map", "read_png", "read_points_bin",
    "read_scene_dir", "scene_ids", "write_feature_map", "write_png", "write_points_bin",
    "write_scene_dir",
]
