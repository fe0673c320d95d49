"""Python surface of the multi-view human-aware reconstruction core."""

from ._hams import (  # noqa: F401
    AlignmentState,
    HamsError,
    PairGraph,
    Scene,
    SemanticPointCloud,
    Sim3,
    binary_mask_loss,
    body_template_info,
    build_pair_graph,
    camera_metrics,
    cli_main,
    confidence_regression_loss,
    densepose_loss,
    depth_metrics,
    estimate_focal,
    extract_cameras,
    fit_bodies,
    fit_body,
    fuse,
    gauge_transform,
    generate_scene,
    infonce_matching_loss,
    init_poses_spanning_tree,
    mpjpe_suite,
    pointmap_to_depth,
    read_array,
    read_ply,
    refine_global_alignment,
    resolve_instance_ids,
    rotation_from_axis_angle,
    rotation_geodesic_deg,
    segmentation_loss,
    skin_body,
    total_loss,
    umeyama_sim3,
    write_array,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
