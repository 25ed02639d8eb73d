"""Perspective projection of 3D Gaussians to screen-space splats.

Forward: view transform, perspective Jacobian, 2D covariance and its inverse
(the conic), per-splat extent. Backward: exact chain rule from screen-space
gradients (mean, conic, opacity, color) down to every cloud parameter,
including the quaternion-normalization and log/logit reparameterizations.
"""

from dataclasses import dataclass, field

import numpy as np

from ..types import sigmoid

ZNEAR = 0.01
# Screen-space covariance floor, px^2. Keeps the conic invertible for
# sub-pixel splats; added after projection so peak weights are unchanged.
DILATION = 0.3
COND_MAX = 1e8
# Per-splat footprint ends where the blending weight falls below this.
# The induced forward discontinuity is ~1e-12 per pixel, which keeps the
# analytic backward within finite-difference tolerance everywhere.
WEIGHT_FLOOR = 1e-12


@dataclass
class ProjectedSplats:
    """Screen-space splats plus the intermediates the backward pass reuses."""

    mean2d: np.ndarray  # (N, 2) pixel coords
    conic: np.ndarray  # (N, 3) (a, b, c): q = a dx^2 + 2 b dx dy + c dy^2
    depth: np.ndarray  # (N,) view-space z
    alpha: np.ndarray  # (N,) squashed opacity
    color: np.ndarray  # (N, 3)
    q_cut: np.ndarray  # (N,) Mahalanobis^2 cutoff per splat
    extent: np.ndarray  # (N, 2) half-extent of the cutoff ellipse bbox, px
    valid: np.ndarray  # (N,) bool: projects in front of camera, well-conditioned
    skipped_degenerate: int
    # backward intermediates
    view_rot: np.ndarray = field(repr=False, default=None)  # (3, 3)
    t_view: np.ndarray = field(repr=False, default=None)  # (N, 3)
    cov3d: np.ndarray = field(repr=False, default=None)  # (N, 3, 3)
    cov2d: np.ndarray = field(repr=False, default=None)  # (N, 2, 2)
    m2: np.ndarray = field(repr=False, default=None)  # (N, 2, 3) = J @ R
    rot_mats: np.ndarray = field(repr=False, default=None)  # (N, 3, 3)
    quat_n: np.ndarray = field(repr=False, default=None)  # (N, 4) normalized
    quat_norm: np.ndarray = field(repr=False, default=None)  # (N,)
    scales: np.ndarray = field(repr=False, default=None)  # (N, 3)
    fx: float = 0.0
    fy: float = 0.0


def project_cloud(cloud, camera, weight_floor=WEIGHT_FLOOR):
    """Project every Gaussian of a cloud through a camera, float64 throughout."""
    n = len(cloud)
    fx, fy, cx, cy = camera.intrinsics()
    view_rot = camera.view_rotation()

    centers = cloud.centers.astype(np.float64)
    log_scales = cloud.log_scales.astype(np.float64)
    quats_raw = cloud.rotations.astype(np.float64)
    alphas = sigmoid(cloud.opacity_logits.astype(np.float64))
    colors = cloud.colors.astype(np.float64)

    scales = np.exp(log_scales)
    quat_norm = np.linalg.norm(quats_raw, axis=1) if n else np.zeros(0)
    quat_n = quats_raw / quat_norm[:, None] if n else quats_raw.reshape(0, 4)

    rot_mats = _rotation_matrices(quat_n)
    m = rot_mats * scales[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)

    t = (centers - camera.position) @ view_rot.T
    in_front = t[:, 2] > ZNEAR if n else np.zeros(0, dtype=bool)

    tz = np.where(in_front, t[:, 2], 1.0)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = fx / tz
    jac[:, 0, 2] = -fx * t[:, 0] / tz**2
    jac[:, 1, 1] = fy / tz
    jac[:, 1, 2] = -fy * t[:, 1] / tz**2
    m2 = jac @ view_rot
    cov2d = m2 @ cov3d @ np.swapaxes(m2, 1, 2)
    cov2d[:, 0, 0] += DILATION
    cov2d[:, 1, 1] += DILATION

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    mid = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(mid * mid - det, 0.0))
    lam_min = mid - disc
    lam_max = mid + disc
    well_conditioned = (det > 0) & (lam_min > 0) & (lam_max <= COND_MAX * lam_min)
    valid = in_front & well_conditioned
    skipped = int(np.count_nonzero(in_front & ~well_conditioned))

    det_safe = np.where(valid, det, 1.0)
    conic = np.stack([c / det_safe, -b / det_safe, a / det_safe], axis=1)

    q_cut = 2.0 * np.log(np.maximum(alphas / weight_floor, 1.0))
    visible = q_cut > 0
    valid = valid & visible
    # tight axis-aligned bbox of the ellipse q(d) = q_cut
    extent = np.sqrt(np.maximum(q_cut[:, None], 0.0) * np.stack([a, c], axis=1))

    mean2d = np.stack([fx * t[:, 0] / tz + cx, fy * t[:, 1] / tz + cy], axis=1)

    return ProjectedSplats(
        mean2d=mean2d,
        conic=conic,
        depth=t[:, 2].copy(),
        alpha=alphas,
        color=colors,
        q_cut=q_cut,
        extent=extent,
        valid=valid,
        skipped_degenerate=skipped,
        view_rot=view_rot,
        t_view=t,
        cov3d=cov3d,
        cov2d=cov2d,
        m2=m2,
        rot_mats=rot_mats,
        quat_n=quat_n,
        quat_norm=quat_norm,
        scales=scales,
        fx=fx,
        fy=fy,
    )


def _rotation_matrices(q):
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
    return rot


def _rotation_quaternion_jacobian(q):
    """d(R)/d(q_normalized): (N, 4, 3, 3) for unit quaternions q."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zero = np.zeros_like(w)
    dw = np.stack(
        [zero, -z, y, z, zero, -x, -y, x, zero], axis=1
    ).reshape(-1, 3, 3)
    dx = np.stack(
        [zero, y, z, y, -2 * x, -w, z, w, -2 * x], axis=1
    ).reshape(-1, 3, 3)
    dy = np.stack(
        [-2 * y, x, w, x, zero, z, -w, z, -2 * y], axis=1
    ).reshape(-1, 3, 3)
    dz = np.stack(
        [-2 * z, -w, x, w, -2 * z, y, x, y, zero], axis=1
    ).reshape(-1, 3, 3)
    return 2.0 * np.stack([dw, dx, dy, dz], axis=1)


def geometry_backward(proj, g_mean2d, g_conic, g_alpha, g_color):
    """Chain screen-space gradients back to cloud parameter space.

    Inputs are per-splat gradients of the scalar loss with respect to the
    projected mean (pixels), conic coefficients (a, b, c), squashed opacity,
    and color. Returns a dict of float64 arrays keyed like the cloud.
    """
    n = len(proj.alpha)
    out = {
        "centers": np.zeros((n, 3)),
        "log_scales": np.zeros((n, 3)),
        "rotations": np.zeros((n, 4)),
        "opacity_logits": np.zeros(n),
        "colors": np.asarray(g_color, dtype=np.float64).copy(),
    }
    if n == 0:
        return out

    live = proj.valid
    if not np.any(live):
        out["colors"][:] = 0.0
        return out

    idx = np.flatnonzero(live)
    t = proj.t_view[idx]
    fx, fy = proj.fx, proj.fy
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    alpha = proj.alpha[idx]
    out["opacity_logits"][idx] = g_alpha[idx] * alpha * (1.0 - alpha)

    # conic -> 2D covariance: conic = inv(cov2d)
    ga, gb, gc = g_conic[idx, 0], g_conic[idx, 1], g_conic[idx, 2]
    g_q_mat = np.empty((len(idx), 2, 2))
    g_q_mat[:, 0, 0] = ga
    g_q_mat[:, 0, 1] = 0.5 * gb
    g_q_mat[:, 1, 0] = 0.5 * gb
    g_q_mat[:, 1, 1] = gc
    cov2d = proj.cov2d[idx]
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    inv2d = np.empty_like(cov2d)
    inv2d[:, 0, 0] = cov2d[:, 1, 1]
    inv2d[:, 0, 1] = -cov2d[:, 0, 1]
    inv2d[:, 1, 0] = -cov2d[:, 0, 1]
    inv2d[:, 1, 1] = cov2d[:, 0, 0]
    inv2d /= det[:, None, None]
    g_cov2d = -inv2d @ g_q_mat @ inv2d  # d inv(S) = -S^-1 dS S^-1

    # cov2d = M2 cov3d M2^T (+ dilation); both factors get gradients
    m2 = proj.m2[idx]
    cov3d = proj.cov3d[idx]
    g_sym = 0.5 * (g_cov2d + np.swapaxes(g_cov2d, 1, 2))
    g_cov3d = np.swapaxes(m2, 1, 2) @ g_sym @ m2
    g_m2 = 2.0 * g_sym @ m2 @ cov3d

    # m2 = J @ view_rot
    g_jac = g_m2 @ proj.view_rot.T

    g_t = np.zeros_like(t)
    inv_z = 1.0 / tz
    inv_z2 = inv_z * inv_z
    # mean2d = (fx tx / tz + cx, fy ty / tz + cy)
    gmx, gmy = g_mean2d[idx, 0], g_mean2d[idx, 1]
    g_t[:, 0] += gmx * fx * inv_z
    g_t[:, 1] += gmy * fy * inv_z
    g_t[:, 2] += -gmx * fx * tx * inv_z2 - gmy * fy * ty * inv_z2
    # Jacobian entries J00 = fx/tz, J02 = -fx tx/tz^2, J11 = fy/tz, J12 = -fy ty/tz^2
    g_t[:, 0] += g_jac[:, 0, 2] * (-fx * inv_z2)
    g_t[:, 1] += g_jac[:, 1, 2] * (-fy * inv_z2)
    g_t[:, 2] += (
        g_jac[:, 0, 0] * (-fx * inv_z2)
        + g_jac[:, 1, 1] * (-fy * inv_z2)
        + g_jac[:, 0, 2] * (2.0 * fx * tx * inv_z2 * inv_z)
        + g_jac[:, 1, 2] * (2.0 * fy * ty * inv_z2 * inv_z)
    )

    out["centers"][idx] = g_t @ proj.view_rot

    # cov3d = M M^T with M = R diag(s)
    m = proj.rot_mats[idx] * proj.scales[idx][:, None, :]
    g_sym3 = 0.5 * (g_cov3d + np.swapaxes(g_cov3d, 1, 2))
    g_m = 2.0 * g_sym3 @ m
    g_scale = np.einsum("nri,nri->ni", g_m, proj.rot_mats[idx])
    out["log_scales"][idx] = g_scale * proj.scales[idx]

    g_rot = g_m * proj.scales[idx][:, None, :]
    drdq = _rotation_quaternion_jacobian(proj.quat_n[idx])
    g_qn = np.einsum("nrc,nqrc->nq", g_rot, drdq)
    # normalization: qn = q / |q|
    qn = proj.quat_n[idx]
    g_raw = (g_qn - np.sum(g_qn * qn, axis=1, keepdims=True) * qn) / proj.quat_norm[idx][:, None]
    out["rotations"][idx] = g_raw

    dead = ~live
    out["colors"][dead] = 0.0
    out["opacity_logits"][dead] = 0.0
    return out
