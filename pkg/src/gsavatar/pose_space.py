"""PCA pose-space model: novel poses are projected onto the training
distribution's principal subspace with per-component +-k*sigma clipping, which
keeps driven poses plausible while suppressing artifacts from extreme inputs.

Two constructions are exposed: a pose-only basis over SMPL-X parameter vectors,
and a joint basis over concatenated (flattened pose map, SMPL-X vector) blocks
with per-block variance normalization; the joint mode reconstructs the pose-map
block directly from the projected vector.
"""

from dataclasses import dataclass

import numpy as np

from . import binio
from .avatar import PoseMapPair, SmplxPose
from .errors import DecodeError

BASIS_MAGIC = b"HGPC"

SIGMA_FLOOR = 1e-8


@dataclass
class PcaBasis:
    basis: np.ndarray  # (D, d), orthonormal columns
    mean: np.ndarray  # (D,)
    sigma: np.ndarray  # (d,) per-component standard deviation, positive
    k: float = 3.0

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        d = self.basis.shape[1]
        if self.basis.shape[0] != len(self.mean) or len(self.sigma) != d:
            raise ValueError("basis/mean/sigma dimensions disagree")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma components must be positive")
        if self.k <= 0:
            raise ValueError("k must be positive")
        gram = self.basis.T @ self.basis
        if np.max(np.abs(gram - np.eye(d))) > 1e-6:
            raise ValueError("basis columns must be orthonormal")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def components(self) -> int:
        return self.basis.shape[1]


def fit_pca(training_vectors: np.ndarray, d: int, k: float = 3.0) -> PcaBasis:
    """Top-d principal directions of the training rows (M, D).

    Deterministic sign convention: the largest-magnitude entry of each column
    is made positive. sigma is the population std of each projected coefficient,
    floored at 1e-8.
    """
    x = np.asarray(training_vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("training vectors must be a 2-D matrix")
    m, dim = x.shape
    if not 1 <= d <= dim:
        raise ValueError(f"component count {d} must lie in [1, {dim}]")
    if m < d:
        raise ValueError(f"need at least {d} training vectors, got {m}")
    if not np.all(np.isfinite(x)):
        raise ValueError("training vectors must be finite")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(m, dim) * np.finfo(np.float64).eps * (svals[0] if len(svals) else 0.0)
    rank = int(np.sum(svals > tol))
    if d > rank:
        raise ValueError(f"component {rank} exceeds the data rank ({rank})")
    basis = vt[:d].T
    flip = basis[np.argmax(np.abs(basis), axis=0), np.arange(d)] < 0
    basis = np.where(flip, -basis, basis)
    coeffs = centered @ basis
    sigma = np.maximum(coeffs.std(axis=0), SIGMA_FLOOR)
    return PcaBasis(basis, mean, sigma, k)


def project_clip(basis: PcaBasis, x: np.ndarray) -> np.ndarray:
    """Clamp the subspace coefficients of x to [-k*sigma, k*sigma] componentwise
    and reconstruct: S @ clamp(S^T (x - mu)) + mu."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(x) != basis.dim:
        raise ValueError(f"vector length {len(x)} != basis dimension {basis.dim}")
    coeffs = basis.basis.T @ (x - basis.mean)
    band = basis.k * basis.sigma
    return basis.basis @ np.clip(coeffs, -band, band) + basis.mean


def save_basis(basis: PcaBasis, path):
    with open(path, "wb") as f:
        f.write(serialize_basis(basis))


def serialize_basis(basis: PcaBasis) -> bytes:
    return b"".join(
        [
            BASIS_MAGIC,
            binio.u32(basis.dim),
            binio.u32(basis.components),
            binio.f32_array(basis.mean),
            binio.f32_array(basis.basis.T),  # column-major: one column at a time
            binio.f32_array(basis.sigma),
            binio.f32(basis.k),
        ]
    )


def load_basis(path) -> PcaBasis:
    with open(path, "rb") as f:
        return parse_basis(f.read())


def parse_basis(data: bytes) -> PcaBasis:
    r = binio.ByteReader(data)
    r.magic(BASIS_MAGIC)
    dim = r.u32()
    d = r.u32()
    mean = r.f32_array(dim)
    basis = r.f32_array(dim * d, (d, dim)).T
    sigma = r.f32_array(d)
    k = r.f32()
    if not r.done():
        raise DecodeError(f"{len(data) - r.pos} trailing bytes in basis file")
    try:
        return PcaBasis(basis, mean, sigma, k)
    except ValueError as e:
        raise DecodeError(f"invalid basis: {e}") from e


@dataclass
class JointPoseSpace:
    """PCA over concatenated (pose map, pose vector) blocks; each block is
    scaled to unit pooled variance before fitting so neither dominates."""

    basis: PcaBasis
    map_shape: tuple  # (H, W)
    pose_dims: tuple  # (theta, beta, psi)
    map_scale: float
    pose_scale: float

    @property
    def map_size(self) -> int:
        h, w = self.map_shape
        return 2 * h * w * 3


def _joint_vector(maps: PoseMapPair, pose: SmplxPose, map_scale, pose_scale) -> np.ndarray:
    block_map = np.concatenate([maps.front.reshape(-1), maps.back.reshape(-1)])
    return np.concatenate([block_map * map_scale, pose.as_vector() * pose_scale])


def fit_joint_pose_space(pose_maps, poses, d: int, k: float = 3.0) -> JointPoseSpace:
    pose_maps = list(pose_maps)
    poses = list(poses)
    if len(pose_maps) != len(poses) or not poses:
        raise ValueError("need equal, nonzero numbers of pose maps and poses")
    map_block = np.stack(
        [np.concatenate([m.front.reshape(-1), m.back.reshape(-1)]) for m in pose_maps]
    )
    pose_block = np.stack([p.as_vector() for p in poses]).astype(np.float64)
    map_scale = 1.0 / max(float(map_block.std()), SIGMA_FLOOR)
    pose_scale = 1.0 / max(float(pose_block.std()), SIGMA_FLOOR)
    train = np.concatenate([map_block * map_scale, pose_block * pose_scale], axis=1)
    basis = fit_pca(train, d, k)
    return JointPoseSpace(basis, pose_maps[0].resolution, poses[0].dims, map_scale, pose_scale)


def project_clip_joint(space: JointPoseSpace, maps: PoseMapPair, pose: SmplxPose) -> tuple[PoseMapPair, SmplxPose]:
    """Project a (pose map, pose) pair into the training space and rebuild both
    blocks from the clipped joint vector."""
    if maps.resolution != space.map_shape:
        raise ValueError(f"pose map resolution {maps.resolution} != {space.map_shape}")
    if pose.dims != space.pose_dims:
        raise ValueError(f"pose dims {pose.dims} != {space.pose_dims}")
    vec = _joint_vector(maps, pose, space.map_scale, space.pose_scale)
    proj = project_clip(space.basis, vec)
    h, w = space.map_shape
    plane = h * w * 3
    map_part = np.clip(proj[: space.map_size] / space.map_scale, 0.0, 1.0)
    front = map_part[:plane].reshape(h, w, 3)
    back = map_part[plane:].reshape(h, w, 3)
    mask_f = (front > 1e-9).any(axis=-1)
    mask_b = (back > 1e-9).any(axis=-1)
    front = np.where(mask_f[:, :, None], front, 0.0)
    back = np.where(mask_b[:, :, None], back, 0.0)
    new_maps = PoseMapPair(front, back, mask_f.astype(np.uint8), mask_b.astype(np.uint8))
    new_pose = SmplxPose.from_vector(
        proj[space.map_size :] / space.pose_scale, space.pose_dims, pose.frame_index
    )
    return new_maps, new_pose
