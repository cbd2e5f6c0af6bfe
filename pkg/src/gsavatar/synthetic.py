"""Seeded synthetic scenes: a small capsule-person template, smooth pose
sequences, and fitting targets. Everything downstream (tests, demos, RD sweeps)
runs on these, since no captured datasets or trained checkpoints exist at desk
scale.
"""

from dataclasses import dataclass, field

import numpy as np

from . import pipeline, renderer
from .avatar import SkinnedTemplate, SmplxPose
from .generator import GeneratorWeights
from .loss import FeatureExtractor
from .renderer import Camera


def make_template(vertex_count: int = 420, seed: int = 0) -> SkinnedTemplate:
    """Capsule person: cylindrical torso plus a spherical head on a 4-joint
    spine chain (pelvis -> spine -> neck -> head), z-centered so the canonical
    front/back split works."""
    rng = np.random.default_rng(seed)
    n_head = max(vertex_count // 5, 8)
    n_body = vertex_count - n_head

    ang = rng.uniform(0.0, 2 * np.pi, n_body)
    height = rng.uniform(-0.55, 0.32, n_body)
    radius = 0.16 * (1.0 - 0.25 * np.clip((height - 0.1) / 0.25, 0.0, 1.0))
    body = np.stack([radius * np.cos(ang), height, radius * np.sin(ang)], axis=1)

    phi = rng.uniform(0.0, 2 * np.pi, n_head)
    costh = rng.uniform(-1.0, 1.0, n_head)
    sinth = np.sqrt(1.0 - costh**2)
    head = 0.11 * np.stack([sinth * np.cos(phi), costh, sinth * np.sin(phi)], axis=1)
    head[:, 1] += 0.47

    verts = np.concatenate([body, head])

    joints = np.array(
        [
            [0.0, -0.55, 0.0],  # pelvis (root)
            [0.0, -0.05, 0.0],  # spine
            [0.0, 0.32, 0.0],  # neck
            [0.0, 0.47, 0.0],  # head
        ]
    )
    parents = np.array([-1, 0, 1, 2])
    # smooth vertical falloff to the two nearest joints along y
    dist = np.abs(verts[:, 1:2] - joints[None, :, 1])
    weights = np.exp(-((dist / 0.18) ** 2))
    weights /= weights.sum(axis=1, keepdims=True)

    bbox = np.array([[-0.35, -0.7, -0.35], [0.35, 0.7, 0.35]])
    return SkinnedTemplate(verts, parents, joints, weights, bbox)


def make_pose_sequence(template: SkinnedTemplate, frames: int, seed: int = 0,
                       amplitude: float = 0.35, beta_dim: int = 10,
                       psi_dim: int = 10) -> list[SmplxPose]:
    """Smooth sinusoidal joint motion with seeded phases; beta is constant over
    the sequence, psi wiggles slightly."""
    rng = np.random.default_rng(seed)
    j = template.joint_count
    phase = rng.uniform(0.0, 2 * np.pi, (j, 3))
    rate = rng.uniform(0.5, 1.5, (j, 3))
    gain = amplitude * rng.uniform(0.2, 1.0, (j, 3))
    gain[0] *= 0.2  # keep the root nearly still
    beta = rng.normal(0.0, 0.5, beta_dim).astype(np.float32)
    poses = []
    for t in range(frames):
        u = 2 * np.pi * t / max(frames, 1)
        theta = (gain * np.sin(rate * u + phase)).astype(np.float32).reshape(-1)
        psi = (0.1 * np.sin(u + np.arange(psi_dim))).astype(np.float32)
        poses.append(SmplxPose(theta, beta.copy(), psi, frame_index=t))
    return poses


def make_camera(image_size=(128, 128), background=(0.0, 0.0, 0.0)) -> Camera:
    """Front orthographic camera: y down in the image, looking along world -z."""
    h, w = image_size
    rot_x_pi = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    scale = h / 1.6
    return Camera(
        mode="orthographic",
        rotation=rot_x_pi,
        translation=np.array([0.0, 0.0, 1.0]),
        size=(h, w),
        scale=scale,
        principal=(w / 2.0, h / 2.0),
        background=np.asarray(background, dtype=np.float64),
    )


def face_mask_for(template: SkinnedTemplate, camera: Camera) -> np.ndarray:
    """Binary image mask over the head region (a disc around the head joint)."""
    h, w = camera.size
    head = template.rest_joint_positions[-1]
    center = camera.rotation @ head + camera.translation
    cy = center[1] * camera.scale + camera.principal[1]
    cx = center[0] * camera.scale + camera.principal[0]
    r = 0.14 * camera.scale
    ys, xs = np.mgrid[0:h, 0:w]
    return (((ys - cy) ** 2 + (xs - cx) ** 2) <= r * r).astype(np.float64)


@dataclass
class Scene:
    template: SkinnedTemplate
    poses: list
    map_resolution: tuple
    camera: Camera
    weights: GeneratorWeights
    face_mask: np.ndarray

    def pose_maps(self) -> list:
        return [
            pipeline.make_pose_maps(self.template, p, self.map_resolution)
            for p in self.poses
        ]


def make_scene(seed: int = 0, frames: int = 6, map_resolution=(64, 64),
               image_size=(128, 128), amplitude: float = 0.35,
               weight_scale: float = 0.05) -> Scene:
    template = make_template(seed=seed)
    poses = make_pose_sequence(template, frames, seed=seed + 1, amplitude=amplitude)
    camera = make_camera(image_size)
    weights = GeneratorWeights.random(seed=seed + 2, kernel_scale=weight_scale)
    return Scene(template, poses, map_resolution, camera,
                 weights, face_mask_for(template, camera))


@dataclass
class FitFrame:
    pose: SmplxPose
    pose_map: object
    target_image: np.ndarray
    target_mask: np.ndarray
    target_features: list


@dataclass
class FitScene(Scene):
    """Scene plus per-frame render targets and a shared feature extractor."""

    extractor: FeatureExtractor = field(default_factory=FeatureExtractor)
    _frames: list = field(default_factory=list)

    def frames(self) -> list:
        return self._frames

    def features(self, image) -> list:
        return self.extractor(image)


def make_fit_scene(seed: int = 0, map_resolution=(16, 16), image_size=(32, 32),
                   teacher_seed_offset: int = 50) -> FitScene:
    """Teacher-student fitting scene: targets are rendered by an independently
    seeded 'teacher' weight set on the same template and poses."""
    template = make_template(vertex_count=160, seed=seed)
    poses = make_pose_sequence(template, 1, seed=seed + 1, amplitude=0.25)
    camera = make_camera(image_size)
    student = GeneratorWeights.random(seed=seed + 2, kernel_scale=0.05)
    teacher = GeneratorWeights.random(seed=seed + teacher_seed_offset, kernel_scale=0.3)
    face_mask = face_mask_for(template, camera)
    scene = FitScene(template, poses, map_resolution, camera, student, face_mask,
                     extractor=FeatureExtractor(seed=7, gain=3.0))
    for pose in poses:
        pm = pipeline.make_pose_maps(template, pose, map_resolution)
        target, _ = pipeline.render_frame(template, pose, teacher, camera, posemap=pm)
        scene._frames.append(
            FitFrame(pose, pm, target.color, target.alpha, scene.extractor(target.color))
        )
    return scene


def make_facial_fit_scene(seed: int = 0, map_resolution=(24, 24), image_size=(48, 48),
                          face_radius: float = 0.18, student_noise: float = 0.5,
                          face_detail: float = 0.12, frames: int = 1) -> FitScene:
    """Fit scene tuned for the facial-attention comparison: a solid-bodied
    teacher render as target, the student initialized near the teacher so the
    fit hovers at its noise floor (where the face weighting decides marginal
    accept/reject tradeoffs), and a face disc that covers the rendered head.

    face_detail adds a checkerboard tint inside the face disc: its
    high-frequency half is unreachable for smooth splats while its mean is
    reachable, which is what gives the attention weight something concrete to
    chase, mirroring the role of hard facial detail at full scale."""
    template = make_template(vertex_count=300, seed=seed)
    poses = make_pose_sequence(template, frames, seed=seed + 1, amplitude=0.25)
    camera = make_camera(image_size)

    def solid(weights):
        w = weights.copy()
        for view in ("front", "back"):
            w.tensors[f"{view}.conv4.bias"][3:6] = np.log(0.05)
            w.tensors[f"{view}.conv4.bias"][10] = 3.0
        return w

    teacher = solid(GeneratorWeights.random(seed=seed + 50, kernel_scale=0.35))
    rng = np.random.default_rng(seed + 2)
    tensors = {}
    for name, arr in teacher.tensors.items():
        if name.endswith(".kernel"):
            rms = float(np.sqrt(np.mean(arr.astype(np.float64) ** 2)))
            tensors[name] = (arr + rng.normal(0, student_noise * rms, arr.shape)).astype(np.float32)
        else:
            tensors[name] = arr.copy()
    student = GeneratorWeights(tensors)

    h, w = camera.size
    head = template.rest_joint_positions[-1]
    center = camera.rotation @ head + camera.translation
    cy = center[1] * camera.scale + camera.principal[1]
    cx = center[0] * camera.scale + camera.principal[0]
    r = face_radius * camera.scale
    ys, xs = np.mgrid[0:h, 0:w]
    face_mask = (((ys - cy) ** 2 + (xs - cx) ** 2) <= r * r).astype(np.float64)

    scene = FitScene(template, poses, map_resolution, camera, student, face_mask,
                     extractor=FeatureExtractor(seed=7, gain=3.0))
    checker = ((ys + xs) % 2 == 0) & (face_mask > 0)
    for pose in poses:
        pm = pipeline.make_pose_maps(template, pose, map_resolution)
        target, _ = pipeline.render_frame(template, pose, teacher, camera, posemap=pm)
        image = target.color.copy()
        image[checker, 0] = np.clip(image[checker, 0] + face_detail, 0.0, 1.0)
        scene._frames.append(
            FitFrame(pose, pm, image, target.alpha, scene.extractor(image))
        )
    return scene


def two_gaussian_target(camera: Camera):
    """Tiny hand-placed reference: two Gaussians, one inside the face region."""
    from .avatar import GaussianCloud

    cloud = GaussianCloud(
        positions=[[0.0, 0.47, 0.1], [0.05, -0.2, 0.1]],
        scales=[[0.06, 0.06, 0.06], [0.09, 0.09, 0.09]],
        rotations=[[1.0, 0, 0, 0], [1.0, 0, 0, 0]],
        opacities=[0.9, 0.8],
        colors=[[0.9, 0.6, 0.5], [0.3, 0.5, 0.8]],
    )
    return renderer.rasterize(cloud, camera)
