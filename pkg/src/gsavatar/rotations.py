"""Rotation helpers: axis-angle, rotation matrices, and wxyz quaternions."""

import numpy as np


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues' formula for a batch of axis-angle vectors, shape (..., 3) -> (..., 3, 3)."""
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    # guard the zero-angle direction; sin(0)/cos terms make the result exact identity
    axis = aa / np.where(angle > 0, angle, 1.0)
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zero = np.zeros_like(x)
    k = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    a = angle[..., None]
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + np.sin(a) * k + (1.0 - np.cos(a)) * (k @ k)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) wxyz -> rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.stack(
        [
            np.stack([1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)], axis=-1),
            np.stack([2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)], axis=-1),
            np.stack([2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)], axis=-1),
        ],
        axis=-2,
    )
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) -> wxyz quaternions with nonnegative w."""
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    n = m.shape[0]
    q = np.empty((n, 4))
    trace = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]

    c1 = trace > 0
    s = np.sqrt(np.where(c1, trace + 1.0, 1.0)) * 2
    q[c1, 0] = 0.25 * s[c1]
    q[c1, 1] = (m[c1, 2, 1] - m[c1, 1, 2]) / s[c1]
    q[c1, 2] = (m[c1, 0, 2] - m[c1, 2, 0]) / s[c1]
    q[c1, 3] = (m[c1, 1, 0] - m[c1, 0, 1]) / s[c1]

    c2 = (~c1) & (m[:, 0, 0] > m[:, 1, 1]) & (m[:, 0, 0] > m[:, 2, 2])
    s = np.sqrt(np.where(c2, 1.0 + m[:, 0, 0] - m[:, 1, 1] - m[:, 2, 2], 1.0)) * 2
    q[c2, 0] = (m[c2, 2, 1] - m[c2, 1, 2]) / s[c2]
    q[c2, 1] = 0.25 * s[c2]
    q[c2, 2] = (m[c2, 0, 1] + m[c2, 1, 0]) / s[c2]
    q[c2, 3] = (m[c2, 0, 2] + m[c2, 2, 0]) / s[c2]

    c3 = (~c1) & (~c2) & (m[:, 1, 1] > m[:, 2, 2])
    s = np.sqrt(np.where(c3, 1.0 + m[:, 1, 1] - m[:, 0, 0] - m[:, 2, 2], 1.0)) * 2
    q[c3, 0] = (m[c3, 0, 2] - m[c3, 2, 0]) / s[c3]
    q[c3, 1] = (m[c3, 0, 1] + m[c3, 1, 0]) / s[c3]
    q[c3, 2] = 0.25 * s[c3]
    q[c3, 3] = (m[c3, 1, 2] + m[c3, 2, 1]) / s[c3]

    c4 = (~c1) & (~c2) & (~c3)
    s = np.sqrt(np.where(c4, 1.0 + m[:, 2, 2] - m[:, 0, 0] - m[:, 1, 1], 1.0)) * 2
    q[c4, 0] = (m[c4, 1, 0] - m[c4, 0, 1]) / s[c4]
    q[c4, 1] = (m[c4, 0, 2] + m[c4, 2, 0]) / s[c4]
    q[c4, 2] = (m[c4, 1, 2] + m[c4, 2, 1]) / s[c4]
    q[c4, 3] = 0.25 * s[c4]

    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    q[q[:, 0] < 0] *= -1.0
    return q.reshape(batch + (4,))


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product of wxyz quaternion batches (rotation q1 applied after q2)."""
    w1, x1, y1, z1 = np.moveaxis(np.asarray(q1, dtype=np.float64), -1, 0)
    w2, x2, y2, z2 = np.moveaxis(np.asarray(q2, dtype=np.float64), -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def polar_rotation(m: np.ndarray) -> np.ndarray:
    """Closest rotation matrices (Frobenius) to a batch of 3x3 matrices, via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    det = np.linalg.det(r)
    flip = det < 0
    if np.any(flip):
        u = u.copy()
        u[flip, :, -1] *= -1.0
        r = u @ vt
    return r
