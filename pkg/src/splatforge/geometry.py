"""Quaternion and covariance primitives used throughout the engine.

Quaternions are stored (w, x, y, z). The world frame is right-handed,
y-up, with the reference camera on the +z axis.
"""

import numpy as np

from .errors import InvalidParameterError


def normalize_quaternion(q):
    """Return q scaled to unit norm; raises on zero or non-finite input."""
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise InvalidParameterError(f"non-finite quaternion {q}")
    n = np.linalg.norm(q)
    if n == 0.0:
        raise InvalidParameterError("zero-norm quaternion")
    return q / n


def quaternion_to_rotation(q):
    """Rotation matrix of a (w, x, y, z) quaternion. Normalizes its input."""
    w, x, y, z = normalize_quaternion(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quaternion_multiply(q1, q2):
    """Hamilton product q1 * q2, both (w, x, y, z)."""
    w1, x1, y1, z1 = np.asarray(q1, dtype=np.float64)
    w2, x2, y2, z2 = np.asarray(q2, dtype=np.float64)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quaternion_about_y(angle_deg):
    """Quaternion for a rotation of angle_deg about the world y axis."""
    half = np.radians(angle_deg) / 2.0
    return np.array([np.cos(half), 0.0, np.sin(half), 0.0])


def covariance_from_scale_rotation(scale, rotation):
    """Build the 3x3 covariance R diag(s) diag(s) R^T of an anisotropic Gaussian.

    Parameters
    ----------
    scale : (3,) positive per-axis standard deviations, world units.
    rotation : (4,) quaternion (w, x, y, z); normalized defensively.

    Returns a symmetric positive-definite matrix with det = (s0*s1*s2)**2.
    """
    s = np.asarray(scale, dtype=np.float64)
    if s.shape != (3,) or not np.all(np.isfinite(s)):
        raise InvalidParameterError(f"bad scale {scale}")
    if np.any(s <= 0):
        raise InvalidParameterError(f"scale must be strictly positive, got {s}")
    rot = quaternion_to_rotation(rotation)
    m = rot * s  # columns of R scaled: R @ diag(s)
    return m @ m.T


def covariances_from_cloud_arrays(log_scales, rotations):
    """Vectorized covariance for (N,3) log-scales and (N,4) raw quaternions.

    Returns (N, 3, 3) float64. Raw quaternions are normalized row-wise.
    """
    s = np.exp(np.asarray(log_scales, dtype=np.float64))
    q = np.asarray(rotations, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rot = np.empty((len(q), 3, 3))
    rot[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rot[:, 0, 1] = 2 * (x * y - w * z)
    rot[:, 0, 2] = 2 * (x * z + w * y)
    rot[:, 1, 0] = 2 * (x * y + w * z)
    rot[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rot[:, 1, 2] = 2 * (y * z - w * x)
    rot[:, 2, 0] = 2 * (x * z - w * y)
    rot[:, 2, 1] = 2 * (y * z + w * x)
    rot[:, 2, 2] = 1 - 2 * (x * x + y * y)
    m = rot * s[:, None, :]
    return m @ np.swapaxes(m, 1, 2)


def rotate_cloud_arrays(centers, rotations, quaternion):
    """Rotate centers and per-Gaussian quaternions by a world-frame quaternion."""
    rot = quaternion_to_rotation(quaternion)
    new_centers = centers @ rot.T
    qn = normalize_quaternion(quaternion)
    new_rotations = np.stack(
        [quaternion_multiply(qn, rq) for rq in np.asarray(rotations, dtype=np.float64)]
    )
    return new_centers, new_rotations
