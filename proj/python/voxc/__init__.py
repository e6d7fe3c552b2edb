"""Hierarchical autoregressive volumetric scene completion.

Thin numpy-facing wrapper over the C++ core. Grids cross the boundary as
(z, y, x) C-order arrays; distances are in voxel units of their own level.
"""

from voxc._core import (
    NUM_CLASSES,
    NUM_LEVELS,
    TRUNCATION_VOXELS,
    LabelVolume,
    ModelHierarchy,
    Pipeline,
    Scene,
    VoxelVolume,
    class_names,
    conv3d,
    emd,
    export_mesh,
    generate_scene,
    l1_completion_errors,
    load_hierarchy,
    load_labels,
    load_volume,
    marching_cubes,
    mesh_to_tdf,
    plan_grids,
    scan_and_fuse,
    seam_score,
    semantic_accuracy,
    semantic_iou,
    vis_mask,
)

__version__ = "0.1.0"

__all__ = [
    "NUM_CLASSES",
    "NUM_LEVELS",
    "TRUNCATION_VOXELS",
    "LabelVolume",
    "ModelHierarchy",
    "Pipeline",
    "Scene",
    "VoxelVolume",
    "class_names",
    "conv3d",
    "emd",
    "export_mesh",
    "generate_scene",
    "l1_completion_errors",
    "load_hierarchy",
    "load_labels",
    "load_volume",
    "marching_cubes",
    "mesh_to_tdf",
    "plan_grids",
    "scan_and_fuse",
    "seam_score",
    "semantic_accuracy",
    "semantic_iou",
    "vis_mask",
    "__version__",
]
