"""Consistent LiDAR + camera data augmentation for 3D object detection.

Transformation flows record every augmentation so that an augmented point can
still find its pixel; multi-modality cut and paste inserts database objects
into both modalities with occlusion checks; aligned feature sampling reads
image features at the exact projected coordinates.
"""

from .errors import (AnnotationMismatch, AtKink, DepthNonPositive, MaskOutsideImage,
                     MocaError, ParseError, PatchOutOfBounds, TruncatedBinary)
from .geometry import (Box2D, Box3D, KittiCalibration, Mask2D, NuScenesCalibration, PixelCoord,
                       bev_overlap, box3d_corners, points_in_box3d, project, project_kitti,
                       project_nuscenes)
from .transform_flow import (Flip, HFlip, Pad, Resize, RotateZ, Scale, TransformFlow, Translate,
                             apply_point_flow, correspond, replay_image_flow, reverse_point_flow)

__version__ = "0.1.0"

__all__ = [
    "AnnotationMismatch", "AtKink", "Box2D", "Box3D", "DepthNonPositive", "Flip", "HFlip",
    "KittiCalibration", "Mask2D", "MaskOutsideImage", "MocaError", "NuScenesCalibration", "Pad",
    "ParseError", "PatchOutOfBounds", "PixelCoord", "Resize", "RotateZ", "Scale",
    "TransformFlow", "Translate", "TruncatedBinary", "apply_point_flow", "bev_overlap",
    "box3d_corners", "correspond", "points_in_box3d", "project", "project_kitti",
    "project_nuscenes", "replay_image_flow", "reverse_point_flow",
]
