"""Human-prior domain types: skinned template, pose vectors, pose maps, Gaussians.

A loadable skinned template (vertices + bone tree + skin weights) stands in for
a full parametric body model; only the linear-blend-skinning math matters to the
codec. Pose maps are front/back orthographic images whose pixels carry the
bbox-normalized posed vertex position as a pseudo-color, which makes the
encoding invertible. Gaussian maps carry per-pixel Gaussian attributes and are
expanded back into 3D Gaussian sets for rendering.
"""

from dataclasses import dataclass, field

import numpy as np

from . import binio
from .errors import DecodeError
from .rotations import axis_angle_to_matrix

ROOT_PARENT = -1

TEMPLATE_MAGIC = b"HGTM"
POSE_SEQUENCE_MAGIC = b"HGPS"

# Gaussian map channel layout (14 channels per pixel)
CH_OFFSET = slice(0, 3)
CH_LOG_SCALE = slice(3, 6)
CH_QUAT = slice(6, 10)
CH_OPACITY = 10
CH_COLOR = slice(11, 14)
GAUSSIAN_MAP_CHANNELS = 14


@dataclass
class SmplxPose:
    """Per-frame body parameters: joint rotations theta (axis-angle, 3 per joint),
    shape coefficients beta, expression coefficients psi."""

    theta: np.ndarray
    beta: np.ndarray
    psi: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float32).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=np.float32).reshape(-1)
        self.psi = np.asarray(self.psi, dtype=np.float32).reshape(-1)
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")

    @property
    def dims(self) -> tuple[int, int, int]:
        return len(self.theta), len(self.beta), len(self.psi)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.beta, self.psi])

    @classmethod
    def from_vector(cls, vec, dims, frame_index=0) -> "SmplxPose":
        td, bd, pd = dims
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if len(vec) != td + bd + pd:
            raise ValueError(f"vector length {len(vec)} != {td}+{bd}+{pd}")
        return cls(vec[:td], vec[td : td + bd], vec[td + bd :], frame_index)


@dataclass
class SkinnedTemplate:
    """Canonical geometry plus the bone tree and skin weights that drive it."""

    canonical_vertices: np.ndarray  # (N, 3) meters
    parents: np.ndarray  # (J,) parent index, root = -1
    rest_joint_positions: np.ndarray  # (J, 3) meters
    skin_weights: np.ndarray  # (N, J), rows sum to 1
    bbox: np.ndarray  # (2, 3) min/max corners

    def __post_init__(self):
        self.canonical_vertices = np.asarray(self.canonical_vertices, dtype=np.float64).reshape(-1, 3)
        self.parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        self.rest_joint_positions = np.asarray(self.rest_joint_positions, dtype=np.float64).reshape(-1, 3)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        self.bbox = np.asarray(self.bbox, dtype=np.float64).reshape(2, 3)
        j = len(self.parents)
        if j == 0:
            raise ValueError("template needs at least one joint")
        if self.rest_joint_positions.shape != (j, 3):
            raise ValueError("rest_joint_positions must be (J, 3)")
        n = len(self.canonical_vertices)
        if self.skin_weights.shape != (n, j):
            raise ValueError(f"skin_weights must be ({n}, {j})")
        if n and (np.any(self.skin_weights < 0) or np.any(np.abs(self.skin_weights.sum(axis=1) - 1.0) > 1e-6)):
            raise ValueError("each skin-weight row must be nonnegative and sum to 1")
        self._topo_order = _validate_tree(self.parents)

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def vertex_count(self) -> int:
        return len(self.canonical_vertices)


def _validate_tree(parents: np.ndarray) -> np.ndarray:
    roots = np.nonzero(parents == ROOT_PARENT)[0]
    if len(roots) != 1:
        raise ValueError(f"parents must encode exactly one root, found {len(roots)}")
    j = len(parents)
    depth = np.full(j, -1, dtype=np.int64)
    for i in range(j):
        if depth[i] >= 0:
            continue
        # walk up to a joint of known depth, then assign depths down the trail
        trail = []
        k = i
        while depth[k] < 0:
            trail.append(k)
            p = parents[k]
            if p == ROOT_PARENT:
                depth[k] = 0
                break
            if not 0 <= p < j:
                raise ValueError(f"joint {k} has out-of-range parent {p}")
            if p in trail:
                raise ValueError("parents contain a cycle")
            k = p
        for t in reversed(trail):
            if depth[t] < 0:
                depth[t] = depth[parents[t]] + 1
    return np.argsort(depth, kind="stable")


@dataclass
class PoseMapPair:
    """Front/back pseudo-color position maps with per-pixel body masks."""

    front: np.ndarray  # (H, W, 3) in [0, 1]
    back: np.ndarray
    body_mask_front: np.ndarray  # (H, W) binary
    body_mask_back: np.ndarray

    def __post_init__(self):
        self.front = np.asarray(self.front, dtype=np.float64)
        self.back = np.asarray(self.back, dtype=np.float64)
        self.body_mask_front = np.asarray(self.body_mask_front, dtype=np.uint8)
        self.body_mask_back = np.asarray(self.body_mask_back, dtype=np.uint8)
        h, w, c = self.front.shape
        if c != 3 or self.back.shape != (h, w, 3):
            raise ValueError("front/back must both be (H, W, 3)")
        if self.body_mask_front.shape != (h, w) or self.body_mask_back.shape != (h, w):
            raise ValueError("masks must be (H, W)")
        for img, mask in ((self.front, self.body_mask_front), (self.back, self.body_mask_back)):
            if img.size and (img.min() < 0.0 or img.max() > 1.0):
                raise ValueError("pose map values must lie in [0, 1]")
            if np.any(img[mask == 0] != 0.0):
                raise ValueError("pixels outside the body mask must be exactly zero")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.front.shape[0], self.front.shape[1]


@dataclass
class Gaussian3D:
    position: np.ndarray  # (3,) meters
    scale: np.ndarray  # (3,) meters, positive
    rotation: np.ndarray  # (4,) unit quaternion wxyz
    opacity: float
    color: np.ndarray  # (3,) in [0, 1]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        if np.any(self.scale <= 0):
            raise ValueError("scale components must be positive")
        if abs(np.linalg.norm(self.rotation) - 1.0) > 1e-6:
            raise ValueError("rotation must be a unit quaternion")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")


@dataclass
class GaussianCloud:
    """Struct-of-arrays Gaussian set; the working representation for rendering."""

    positions: np.ndarray  # (G, 3)
    scales: np.ndarray  # (G, 3)
    rotations: np.ndarray  # (G, 4) unit quaternions wxyz
    opacities: np.ndarray  # (G,)
    colors: np.ndarray  # (G, 3)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        g = len(self.positions)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(g, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(g, 4)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(g)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(g, 3)

    def __len__(self) -> int:
        return len(self.positions)

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            self.positions[i], self.scales[i], self.rotations[i],
            float(self.opacities[i]), self.colors[i],
        )

    @classmethod
    def from_gaussians(cls, gaussians) -> "GaussianCloud":
        if not gaussians:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)))
        return cls(
            np.stack([g.position for g in gaussians]),
            np.stack([g.scale for g in gaussians]),
            np.stack([g.rotation for g in gaussians]),
            np.array([g.opacity for g in gaussians]),
            np.stack([g.color for g in gaussians]),
        )


@dataclass
class GaussianMapPair:
    """Front/back per-pixel Gaussian attribute images (14 channels), with the
    body masks of the pose maps that produced them."""

    front: np.ndarray  # (H, W, 14)
    back: np.ndarray
    body_mask_front: np.ndarray
    body_mask_back: np.ndarray

    def __post_init__(self):
        self.front = np.asarray(self.front, dtype=np.float32)
        self.back = np.asarray(self.back, dtype=np.float32)
        self.body_mask_front = np.asarray(self.body_mask_front, dtype=np.uint8)
        self.body_mask_back = np.asarray(self.body_mask_back, dtype=np.uint8)
        h, w, c = self.front.shape
        if c != GAUSSIAN_MAP_CHANNELS or self.back.shape != (h, w, GAUSSIAN_MAP_CHANNELS):
            raise ValueError(f"Gaussian maps must be (H, W, {GAUSSIAN_MAP_CHANNELS})")
        if self.body_mask_front.shape != (h, w) or self.body_mask_back.shape != (h, w):
            raise ValueError("masks must be (H, W)")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.front.shape[0], self.front.shape[1]


def joint_transforms(template: SkinnedTemplate, pose: SmplxPose) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint world transforms composed against the rest pose.

    Returns (R, t) with shapes (J, 3, 3) and (J, 3): joint j maps a canonical
    point v to R[j] @ v + t[j]. The identity pose yields identity transforms.
    """
    j = template.joint_count
    if len(pose.theta) != 3 * j:
        raise ValueError(f"theta length {len(pose.theta)} != 3 * {j} joints")
    local = axis_angle_to_matrix(pose.theta.astype(np.float64).reshape(j, 3))
    rest = template.rest_joint_positions
    world_r = np.empty((j, 3, 3))
    world_t = np.empty((j, 3))
    for i in template._topo_order:
        p = template.parents[i]
        if p == ROOT_PARENT:
            world_r[i] = local[i]
            world_t[i] = rest[i]
        else:
            world_r[i] = world_r[p] @ local[i]
            world_t[i] = world_r[p] @ (rest[i] - rest[p]) + world_t[p]
    # compose against the rest pose so the identity pose is a no-op
    t = world_t - np.einsum("jab,jb->ja", world_r, rest)
    return world_r, t


def lbs_blend(points: np.ndarray, weights: np.ndarray, rotations: np.ndarray,
              translations: np.ndarray) -> np.ndarray:
    """Blend per-joint rigid transforms: p' = sum_j w_j (R_j p + t_j)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(points), len(rotations)):
        raise ValueError("weights must be (num_points, num_joints)")
    out = np.zeros_like(points)
    for j in range(len(rotations)):
        w = weights[:, j]
        if not np.any(w):
            continue
        out += w[:, None] * (points @ rotations[j].T + translations[j])
    return out


def pose_template(template: SkinnedTemplate, pose: SmplxPose) -> np.ndarray:
    """Deform the canonical vertices to a pose with linear blend skinning.

    Motion is purely local: there is no global body translation or orientation
    input beyond the per-joint rotations themselves.
    """
    r, t = joint_transforms(template, pose)
    return lbs_blend(template.canonical_vertices, template.skin_weights, r, t)


def _front_selector(template: SkinnedTemplate) -> np.ndarray:
    # front/back split by the sign of the canonical z coordinate; the template
    # carries no surface topology so there are no true normals to use
    return template.canonical_vertices[:, 2] >= 0.0


def render_pose_maps(posed_vertices: np.ndarray, template: SkinnedTemplate,
                     resolution: tuple[int, int] = (256, 256)) -> PoseMapPair:
    """Orthographically project posed vertices into front/back pseudo-color maps.

    Pixel color is the posed position normalized by the template bbox to [0,1]^3.
    A vertex lands on the front map when its canonical z >= 0, else on the back
    map; both views share the same un-mirrored pixel grid. Per pixel the vertex
    nearest the viewing camera wins (front camera looks along -z, back along +z).
    """
    h, w = resolution
    if h < 2 or w < 2:
        raise ValueError("resolution must be at least 2x2")
    lo, hi = template.bbox[0], template.bbox[1]
    if np.any(hi <= lo):
        raise ValueError("template bbox is degenerate")
    posed = np.asarray(posed_vertices, dtype=np.float64).reshape(-1, 3)

    maps = np.zeros((2, h, w, 3))
    masks = np.zeros((2, h, w), dtype=np.uint8)
    if len(posed):
        if len(posed) != template.vertex_count:
            raise ValueError(
                f"got {len(posed)} posed vertices for a template with {template.vertex_count}"
            )
        norm = np.clip((posed - lo) / (hi - lo), 0.0, 1.0)
        cols = np.rint(norm[:, 0] * (w - 1)).astype(np.int64)
        rows = np.rint((1.0 - norm[:, 1]) * (h - 1)).astype(np.int64)
        front_sel = _front_selector(template)
        for view, sel in ((0, front_sel), (1, ~front_sel)):
            idx = np.nonzero(sel)[0]
            if not len(idx):
                continue
            depth = 1.0 - norm[idx, 2] if view == 0 else norm[idx, 2]
            order = np.argsort(depth, kind="stable")[::-1]  # write far first, near last
            rr, cc = rows[idx][order], cols[idx][order]
            maps[view, rr, cc] = norm[idx][order]
            masks[view, rr, cc] = 1
    return PoseMapPair(maps[0], maps[1], masks[0], masks[1])


def backproject_pixels(rows: np.ndarray, cols: np.ndarray, view: int,
                       resolution: tuple[int, int], bbox: np.ndarray) -> np.ndarray:
    """Canonical 3D point of a pose/Gaussian map pixel: the pixel's position on
    the view's bbox face (front view: near face z_norm=1; back view: z_norm=0)."""
    h, w = resolution
    lo, hi = np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64)
    xn = cols / (w - 1)
    yn = 1.0 - rows / (h - 1)
    zn = np.full_like(xn, 1.0 if view == 0 else 0.0, dtype=np.float64)
    return lo + np.stack([xn, yn, zn], axis=-1) * (hi - lo)


def extract_gaussians(maps: GaussianMapPair, bbox: np.ndarray) -> GaussianCloud:
    """Expand the masked pixels of a Gaussian map pair into a 3D Gaussian set.

    Per pixel: position = canonical back-projection + offset channels,
    scale = exp(log-scale), opacity = logistic(logit), quaternion normalized
    (an all-zero quaternion decodes as identity), color clipped to [0, 1].
    """
    h, w = maps.resolution
    parts = []
    for view, (img, mask) in enumerate(
        ((maps.front, maps.body_mask_front), (maps.back, maps.body_mask_back))
    ):
        rows, cols = np.nonzero(mask)
        if not len(rows):
            continue
        px = img[rows, cols].astype(np.float64)
        pos = backproject_pixels(rows, cols, view, (h, w), bbox) + px[:, CH_OFFSET]
        scale = np.exp(px[:, CH_LOG_SCALE])
        quat = px[:, CH_QUAT]
        nrm = np.linalg.norm(quat, axis=1)
        degenerate = nrm < 1e-12
        quat = np.where(degenerate[:, None], [[1.0, 0, 0, 0]], quat / np.where(degenerate, 1.0, nrm)[:, None])
        opacity = 1.0 / (1.0 + np.exp(-px[:, CH_OPACITY]))
        color = np.clip(px[:, CH_COLOR], 0.0, 1.0)
        parts.append((pos, scale, quat, opacity, color))
    if not parts:
        return GaussianCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)))
    return GaussianCloud(*[np.concatenate(cols) for cols in zip(*parts)])


def save_template(template: SkinnedTemplate, path):
    data = serialize_template(template)
    with open(path, "wb") as f:
        f.write(data)


def serialize_template(template: SkinnedTemplate) -> bytes:
    out = [
        TEMPLATE_MAGIC,
        binio.u32(template.vertex_count),
        binio.u32(template.joint_count),
        binio.f32_array(template.canonical_vertices),
        binio.i32_array(template.parents),
        binio.f32_array(template.rest_joint_positions),
        binio.f32_array(template.skin_weights),
        binio.f32_array(template.bbox),
    ]
    return b"".join(out)


def load_template(path) -> SkinnedTemplate:
    with open(path, "rb") as f:
        return parse_template(f.read())


def parse_template(data: bytes) -> SkinnedTemplate:
    r = binio.ByteReader(data)
    r.magic(TEMPLATE_MAGIC)
    n = r.u32()
    j = r.u32()
    verts = r.f32_array(n * 3, (n, 3))
    parents = r.i32_array(j)
    rest = r.f32_array(j * 3, (j, 3))
    weights = r.f32_array(n * j, (n, j))
    bbox = r.f32_array(6, (2, 3))
    try:
        return SkinnedTemplate(verts, parents, rest, weights, bbox)
    except ValueError as e:
        raise DecodeError(f"invalid template: {e}") from e


def save_pose_sequence(poses, path):
    with open(path, "wb") as f:
        f.write(serialize_pose_sequence(poses))


def serialize_pose_sequence(poses) -> bytes:
    poses = list(poses)
    dims = poses[0].dims if poses else (0, 0, 0)
    for p in poses:
        if p.dims != dims:
            raise ValueError(f"pose dims {p.dims} differ from {dims}")
    out = [POSE_SEQUENCE_MAGIC, binio.u32(len(poses))]
    out += [binio.u32(d) for d in dims]
    for p in poses:
        out.append(binio.f32_array(p.as_vector()))
    return b"".join(out)


def load_pose_sequence(path) -> list[SmplxPose]:
    with open(path, "rb") as f:
        return parse_pose_sequence(f.read())


def parse_pose_sequence(data: bytes) -> list[SmplxPose]:
    r = binio.ByteReader(data)
    r.magic(POSE_SEQUENCE_MAGIC)
    count = r.u32()
    dims = (r.u32(), r.u32(), r.u32())
    per_frame = sum(dims)
    poses = []
    for i in range(count):
        vec = r.f32_array(per_frame)
        poses.append(SmplxPose.from_vector(vec, dims, frame_index=i))
    return poses
