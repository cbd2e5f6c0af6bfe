"""End-to-end frame path: pose -> pose maps -> generator -> Gaussians -> image.

Shared by the container codec, the fitting loop, and the CLI so every consumer
renders frames identically.
"""

import numpy as np

from . import avatar, generator, renderer


def make_pose_maps(template, pose, resolution) -> avatar.PoseMapPair:
    posed = avatar.pose_template(template, pose)
    return avatar.render_pose_maps(posed, template, resolution)


def reconstruct_cloud(weights, posemap, bbox):
    """Generator forward pass plus Gaussian extraction; returns (maps, cloud)."""
    gmaps = generator.forward(weights, posemap)
    return gmaps, avatar.extract_gaussians(gmaps, bbox)


def render_cloud_posed(cloud, template, pose, camera) -> renderer.SplatImage:
    if len(cloud) == 0:
        return renderer.rasterize(cloud, camera)
    attachment = renderer.attach_to_template(cloud, template)
    deformed = renderer.lbs_deform_gaussians(cloud, template, pose, attachment)
    return renderer.rasterize(deformed, camera)


def render_frame(template, pose, weights, camera, map_resolution=None, posemap=None):
    """Render one frame; returns (SplatImage, GaussianMapPair).

    Pass a decoded pose map to follow the transmitted-pose-map path, or leave
    it None to regenerate the map from the pose (the drive path).
    """
    if posemap is None:
        if map_resolution is None:
            raise ValueError("need either a pose map or a map resolution")
        posemap = make_pose_maps(template, pose, map_resolution)
    gmaps, cloud = reconstruct_cloud(weights, posemap, template.bbox)
    return render_cloud_posed(cloud, template, pose, camera), gmaps


def canonical_pose(template) -> avatar.SmplxPose:
    """The identity pose for a template (all joint rotations zero)."""
    return avatar.SmplxPose(
        np.zeros(3 * template.joint_count, dtype=np.float32),
        np.zeros(0, dtype=np.float32),
        np.zeros(0, dtype=np.float32),
    )
