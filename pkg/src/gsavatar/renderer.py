"""CPU Gaussian splatting: LBS deformation into pose space, tile-based
front-to-back alpha compositing, and PSNR/SSIM image metrics.

Gaussians are projected to 2D means and covariances (orthographic: drop the
view-space depth row/column; pinhole: first-order Jacobian of the perspective
division), sorted once by view-space depth, and composited tile by tile in that
global order, so the output is deterministic and permutation-invariant.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .avatar import GaussianCloud, SkinnedTemplate, SmplxPose, joint_transforms
from .errors import DecodeError
from .rotations import matrix_to_quat, polar_rotation, quat_multiply, quat_to_matrix

ALPHA_CLAMP = 0.999
FOOTPRINT_SIGMA = 3.0
TILE = 16
_MIN_TRANSMITTANCE = 1e-5


@dataclass
class Camera:
    mode: str  # "orthographic" | "pinhole"
    rotation: np.ndarray  # (3, 3) world-to-view
    translation: np.ndarray  # (3,)
    size: tuple  # (H, W)
    scale: float = 1.0  # orthographic pixels per meter
    focal: tuple = (1.0, 1.0)  # pinhole fx, fy
    principal: tuple = (0.0, 0.0)  # cx, cy
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.mode not in ("orthographic", "pinhole"):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        self.size = (int(self.size[0]), int(self.size[1]))
        if np.max(np.abs(self.rotation @ self.rotation.T - np.eye(3))) > 1e-6:
            raise ValueError("camera rotation must be orthonormal")


@dataclass
class SplatImage:
    color: np.ndarray  # (H, W, 3) in [0, 1]
    alpha: np.ndarray  # (H, W) accumulated alpha in [0, 1]
    skipped: int = 0  # Gaussians dropped for singular 2-D covariance


def attach_to_template(cloud: GaussianCloud, template: SkinnedTemplate) -> np.ndarray:
    """Skin-weight rows for each Gaussian, copied from its nearest canonical vertex."""
    if template.vertex_count == 0:
        raise ValueError("template has no vertices to attach to")
    tree = cKDTree(template.canonical_vertices)
    _, nearest = tree.query(cloud.positions)
    return template.skin_weights[nearest]


def deform_gaussians_with_transforms(cloud: GaussianCloud, attachment: np.ndarray,
                                     rotations: np.ndarray, translations: np.ndarray) -> GaussianCloud:
    """Blend per-joint rigid transforms onto Gaussians.

    Positions blend linearly (x' = sum_j w_j (R_j x + t_j)); each covariance is
    rotated by the polar-decomposed rotation part of the blended transform,
    realized as a quaternion composition with the scale kept unchanged.
    """
    attachment = np.asarray(attachment, dtype=np.float64)
    if attachment.shape != (len(cloud), len(rotations)):
        raise ValueError(
            f"attachment must be ({len(cloud)}, {len(rotations)}), got {attachment.shape}"
        )
    if len(cloud) and np.any(np.abs(attachment.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("attachment rows must sum to 1")
    if len(cloud) == 0:
        return cloud
    blended_r = np.einsum("gj,jab->gab", attachment, rotations)
    blended_t = attachment @ translations
    positions = np.einsum("gab,gb->ga", blended_r, cloud.positions) + blended_t
    rot = polar_rotation(blended_r)
    quats = quat_multiply(matrix_to_quat(rot), cloud.rotations)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianCloud(positions, cloud.scales.copy(), quats,
                         cloud.opacities.copy(), cloud.colors.copy())


def lbs_deform_gaussians(cloud: GaussianCloud, template: SkinnedTemplate,
                         pose: SmplxPose, attachment: np.ndarray) -> GaussianCloud:
    """Deform Gaussians into pose space with the template's forward kinematics."""
    r, t = joint_transforms(template, pose)
    if np.asarray(attachment).shape[1:] != (template.joint_count,):
        raise ValueError(f"attachment columns must match {template.joint_count} joints")
    return deform_gaussians_with_transforms(cloud, attachment, r, t)


def _project(cloud: GaussianCloud, camera: Camera):
    """View transform + 2D projection; returns (uv, cov2d, depth, valid mask)."""
    xv = cloud.positions @ camera.rotation.T + camera.translation
    depth = xv[:, 2]
    rq = quat_to_matrix(cloud.rotations)
    cov_world = np.einsum("gab,gb,gcb->gac", rq, cloud.scales**2, rq)
    cov_view = np.einsum("ab,gbc,dc->gad", camera.rotation, cov_world, camera.rotation)
    if camera.mode == "orthographic":
        s = camera.scale
        uv = xv[:, :2] * s + np.asarray(camera.principal)
        cov2 = cov_view[:, :2, :2] * (s * s)
        valid = np.ones(len(cloud), dtype=bool)
    else:
        fx, fy = camera.focal
        cx, cy = camera.principal
        valid = depth > 1e-6
        z = np.where(valid, depth, 1.0)
        uv = np.stack([fx * xv[:, 0] / z + cx, fy * xv[:, 1] / z + cy], axis=1)
        jac = np.zeros((len(cloud), 2, 3))
        jac[:, 0, 0] = fx / z
        jac[:, 0, 2] = -fx * xv[:, 0] / (z * z)
        jac[:, 1, 1] = fy / z
        jac[:, 1, 2] = -fy * xv[:, 1] / (z * z)
        cov2 = np.einsum("gab,gbc,gdc->gad", jac, cov_view, jac)
    return uv, cov2, depth, valid


def rasterize(cloud: GaussianCloud, camera: Camera) -> SplatImage:
    """Front-to-back alpha compositing of depth-sorted Gaussians over the background.

    Footprints are truncated at 3 sigma (Mahalanobis); per-Gaussian alpha is
    opacity * exp(-0.5 d^T Sigma^-1 d) clamped to 0.999. Gaussians with singular
    2-D covariance are skipped and tallied.
    """
    h, w = camera.size
    color = np.zeros((h, w, 3))
    transmittance = np.ones((h, w))
    if len(cloud) == 0:
        color[:] = camera.background
        return SplatImage(color, np.zeros((h, w)), 0)
    if not (np.all(np.isfinite(cloud.positions)) and np.all(np.isfinite(cloud.scales))):
        raise ValueError("Gaussian attributes must be finite")

    uv, cov2, depth, valid = _project(cloud, camera)
    det = cov2[:, 0, 0] * cov2[:, 1, 1] - cov2[:, 0, 1] * cov2[:, 1, 0]
    singular = det < 1e-12
    skipped = int(np.sum(singular & valid))
    keep = valid & ~singular

    inv = np.empty_like(cov2)
    safe_det = np.where(keep, det, 1.0)
    inv[:, 0, 0] = cov2[:, 1, 1] / safe_det
    inv[:, 1, 1] = cov2[:, 0, 0] / safe_det
    inv[:, 0, 1] = inv[:, 1, 0] = -cov2[:, 0, 1] / safe_det
    # 3-sigma pixel radius from the dominant eigenvalue of the 2x2 covariance
    tr = cov2[:, 0, 0] + cov2[:, 1, 1]
    eig_max = 0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    radius = FOOTPRINT_SIGMA * np.sqrt(np.maximum(eig_max, 0.0))

    order = np.argsort(depth, kind="stable")
    order = order[keep[order]]

    x0 = np.maximum(np.floor(uv[:, 0] - radius).astype(np.int64), 0)
    x1 = np.minimum(np.ceil(uv[:, 0] + radius).astype(np.int64) + 1, w)
    y0 = np.maximum(np.floor(uv[:, 1] - radius).astype(np.int64), 0)
    y1 = np.minimum(np.ceil(uv[:, 1] + radius).astype(np.int64) + 1, h)

    for ty in range(0, h, TILE):
        for tx in range(0, w, TILE):
            te_y, te_x = min(ty + TILE, h), min(tx + TILE, w)
            hits = order[
                (x0[order] < te_x) & (x1[order] > tx) & (y0[order] < te_y) & (y1[order] > ty)
            ]
            if not len(hits):
                continue
            ys = np.arange(ty, te_y)[:, None]
            xs = np.arange(tx, te_x)[None, :]
            tile_color = color[ty:te_y, tx:te_x]
            tile_trans = transmittance[ty:te_y, tx:te_x]
            for g in hits:
                dx = xs - uv[g, 0]
                dy = ys - uv[g, 1]
                maha = inv[g, 0, 0] * dx * dx + 2.0 * inv[g, 0, 1] * dx * dy + inv[g, 1, 1] * dy * dy
                footprint = maha <= FOOTPRINT_SIGMA**2
                if not footprint.any():
                    continue
                alpha = np.where(
                    footprint,
                    np.minimum(cloud.opacities[g] * np.exp(-0.5 * maha), ALPHA_CLAMP),
                    0.0,
                )
                contrib = tile_trans * alpha
                tile_color += contrib[:, :, None] * cloud.colors[g]
                tile_trans *= 1.0 - alpha
                if tile_trans.max() < _MIN_TRANSMITTANCE:
                    break
    color += transmittance[:, :, None] * camera.background
    return SplatImage(np.clip(color, 0.0, 1.0), 1.0 - transmittance, skipped)


def psnr(a: np.ndarray, b: np.ndarray, max_value: float = 1.0) -> float:
    """10 log10(max^2 / MSE), capped at 99 dB for near-identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes {a.shape} and {b.shape} disagree")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-12:
        return 99.0
    return min(10.0 * np.log10(max_value * max_value / mse), 99.0)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim(a: np.ndarray, b: np.ndarray, max_value: float = 1.0) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03; the mean is taken over valid window positions and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes {a.shape} and {b.shape} disagree")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    win = _gaussian_window()
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2

    def smooth(img):
        from numpy.lib.stride_tricks import sliding_window_view

        t = sliding_window_view(img, len(win), axis=1) @ win
        return sliding_window_view(t, len(win), axis=0) @ win

    vals = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx, my = smooth(x), smooth(y)
        mxx, myy, mxy = smooth(x * x), smooth(y * y), smooth(x * y)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        s = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(np.mean(s))
    return float(np.mean(vals))


def write_ppm(image: np.ndarray, path):
    """8-bit binary PPM (P6) writer; values are clipped to [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (H, W, 3)")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def save_camera(camera: Camera, path):
    lines = [
        f"mode: {camera.mode}",
        "rotation: " + " ".join(f"{v:.9g}" for v in camera.rotation.reshape(-1)),
        "translation: " + " ".join(f"{v:.9g}" for v in camera.translation),
        f"size: {camera.size[0]} {camera.size[1]}",
        f"scale: {camera.scale:.9g}",
        f"focal: {camera.focal[0]:.9g} {camera.focal[1]:.9g}",
        f"principal: {camera.principal[0]:.9g} {camera.principal[1]:.9g}",
        "background: " + " ".join(f"{v:.9g}" for v in camera.background),
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_camera(path) -> Camera:
    fields = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DecodeError(f"camera file line without key: {line!r}")
            key, _, value = line.partition(":")
            fields[key.strip()] = value.split()
    try:
        return Camera(
            mode=fields["mode"][0],
            rotation=np.array(fields["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.array(fields["translation"], dtype=np.float64),
            size=(int(fields["size"][0]), int(fields["size"][1])),
            scale=float(fields["scale"][0]),
            focal=(float(fields["focal"][0]), float(fields["focal"][1])),
            principal=(float(fields["principal"][0]), float(fields["principal"][1])),
            background=np.array(fields["background"], dtype=np.float64),
        )
    except (KeyError, IndexError, ValueError) as e:
        raise DecodeError(f"invalid camera file: {e}") from e
