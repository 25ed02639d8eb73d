"""Multi-view color baking: paint mesh texels from splat renders.

The cloud is rendered from 26 orbit poses (8 azimuths x 3 elevations plus
near-polar top and bottom). Every texel visible in a view (depth-tested
against the mesh, facing the camera above a cosine cutoff) accumulates the
un-premultiplied render color weighted by that cosine; unseen texels fill by
iterative dilation from their painted neighbors.
"""

import numpy as np
from numba import njit

from .cameras import camera_from_sample, texturing_views
from .errors import ContractViolationError
from .raster import render
from .raster.mesh_render import render_mesh
from .types import ImageRGBA

TEXTURE_SIZES = (256, 512, 1024, 2048)
DEFAULT_COS_CUTOFF = 0.3
DEPTH_TOLERANCE = 0.02
MIN_SAMPLE_ALPHA = 0.5
DILATION_PASSES = 8


@njit(cache=True)
def _texel_geometry_kernel(uvs, tris, verts, normals, size, pos_map, nrm_map, seen):
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        x0, y0 = uvs[i0, 0] * size, uvs[i0, 1] * size
        x1, y1 = uvs[i1, 0] * size, uvs[i1, 1] * size
        x2, y2 = uvs[i2, 0] * size, uvs[i2, 1] * size
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        inv_area = 1.0 / area
        lo_x = max(int(np.floor(min(x0, x1, x2) - 0.5)), 0)
        hi_x = min(int(np.ceil(max(x0, x1, x2) - 0.5)), size - 1)
        lo_y = max(int(np.floor(min(y0, y1, y2) - 0.5)), 0)
        hi_y = min(int(np.ceil(max(y0, y1, y2) - 0.5)), size - 1)
        for ty in range(lo_y, hi_y + 1):
            cy = ty + 0.5
            for tx in range(lo_x, hi_x + 1):
                cx = tx + 0.5
                w0 = ((x1 - cx) * (y2 - cy) - (y1 - cy) * (x2 - cx)) * inv_area
                w1 = ((x2 - cx) * (y0 - cy) - (y2 - cy) * (x0 - cx)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                for c in range(3):
                    pos_map[ty, tx, c] = (
                        w0 * verts[i0, c] + w1 * verts[i1, c] + w2 * verts[i2, c]
                    )
                    nrm_map[ty, tx, c] = (
                        w0 * normals[i0, c] + w1 * normals[i1, c] + w2 * normals[i2, c]
                    )
                seen[ty, tx] = True


def texel_geometry(mesh, texture_size):
    """Per-texel surface position and normal maps from the UV atlas."""
    pos_map = np.zeros((texture_size, texture_size, 3))
    nrm_map = np.zeros((texture_size, texture_size, 3))
    covered = np.zeros((texture_size, texture_size), dtype=np.bool_)
    _texel_geometry_kernel(
        np.ascontiguousarray(mesh.uvs),
        mesh.triangles.astype(np.int64),
        mesh.vertices,
        mesh.normals,
        texture_size,
        pos_map,
        nrm_map,
        covered,
    )
    norms = np.linalg.norm(nrm_map, axis=2, keepdims=True)
    nrm_map = np.where(norms > 1e-12, nrm_map / np.maximum(norms, 1e-12), nrm_map)
    return pos_map, nrm_map, covered


def _bilinear(image, px, py):
    """Sample a (H, W[, C]) image at float pixel coords, clamp-to-edge."""
    h, w = image.shape[:2]
    fx = np.clip(px - 0.5, 0.0, w - 1.0)
    fy = np.clip(py - 0.5, 0.0, h - 1.0)
    x0 = np.clip(np.floor(fx).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(fx, np.int64)
    y0 = np.clip(np.floor(fy).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(fy, np.int64)
    ax = (fx - x0)[..., None] if image.ndim == 3 else fx - x0
    ay = (fy - y0)[..., None] if image.ndim == 3 else fy - y0
    v00 = image[y0, x0]
    v10 = image[y0, x0 + 1]
    v01 = image[y0 + 1, x0]
    v11 = image[y0 + 1, x0 + 1]
    return (
        v00 * (1 - ax) * (1 - ay)
        + v10 * ax * (1 - ay)
        + v01 * (1 - ax) * ay
        + v11 * ax * ay
    )


def _depth_placeholder_texture():
    return ImageRGBA(np.zeros((4, 4, 4)))


def color_backproject(
    mesh,
    cloud,
    texture_size=1024,
    views=None,
    fov_y=49.1,
    view_resolution=512,
    cos_cutoff=DEFAULT_COS_CUTOFF,
):
    """Bake a texture for a UV-mapped mesh by back-projecting cloud renders.

    Returns (textured mesh, coverage report dict).
    """
    if mesh.uvs is None:
        raise ContractViolationError("color_backproject needs a UV atlas; run uv_unwrap first")
    if texture_size not in TEXTURE_SIZES:
        raise ContractViolationError(
            f"texture_size must be a power of two in {TEXTURE_SIZES}, got {texture_size}"
        )
    views = texturing_views() if views is None else views

    pos_map, nrm_map, covered = texel_geometry(mesh, texture_size)
    tex_ids = np.flatnonzero(covered.ravel())
    positions = pos_map.reshape(-1, 3)[tex_ids]
    tnormals = nrm_map.reshape(-1, 3)[tex_ids]

    weight_sum = np.zeros(len(tex_ids))
    color_sum = np.zeros((len(tex_ids), 3))

    depth_probe = mesh.with_texture(_depth_placeholder_texture()) if mesh.texture is None else mesh
    for sample in views:
        cam = camera_from_sample(sample, fov_y=fov_y, resolution=view_resolution)
        splat = render(cloud, cam)
        depth = render_mesh(depth_probe, cam).depth

        rel = positions - cam.position
        view_dir = rel / np.linalg.norm(rel, axis=1, keepdims=True)
        cos = -np.einsum("ij,ij->i", view_dir, tnormals)

        t = cam.to_view(positions)
        tz = t[:, 2]
        fx, fy, cx, cy = cam.intrinsics()
        safe_z = np.where(tz > 0, tz, 1.0)
        px = fx * t[:, 0] / safe_z + cx
        py = fy * t[:, 1] / safe_z + cy

        in_frame = (tz > 0) & (px >= 0.5) & (px < view_resolution - 0.5) & (py >= 0.5) & (py < view_resolution - 0.5)
        candidate = in_frame & (cos >= cos_cutoff)
        if not np.any(candidate):
            continue
        sel = np.flatnonzero(candidate)
        ix = np.clip(np.round(px[sel] - 0.5).astype(np.int64), 0, view_resolution - 1)
        iy = np.clip(np.round(py[sel] - 0.5).astype(np.int64), 0, view_resolution - 1)
        visible = np.abs(tz[sel] - depth[iy, ix]) <= DEPTH_TOLERANCE
        sel = sel[visible]
        if len(sel) == 0:
            continue
        rgb = _bilinear(splat.rgb, px[sel], py[sel])
        a = _bilinear(splat.alpha, px[sel], py[sel])
        solid = a >= MIN_SAMPLE_ALPHA
        sel = sel[solid]
        if len(sel) == 0:
            continue
        color = np.clip(rgb[solid] / a[solid][:, None], 0.0, 1.0)
        w = cos[sel]
        weight_sum[sel] += w
        color_sum[sel] += w[:, None] * color

    painted = weight_sum > 0
    texel_rgb = np.full((texture_size * texture_size, 3), np.nan)
    texel_rgb[tex_ids[painted]] = color_sum[painted] / weight_sum[painted][:, None]
    texel_rgb = texel_rgb.reshape(texture_size, texture_size, 3)

    seen_mask = np.zeros((texture_size, texture_size), dtype=bool)
    seen_mask.ravel()[tex_ids[painted]] = True
    n_seen = int(seen_mask.sum())

    texel_rgb, seen_after = _dilate(texel_rgb, seen_mask, DILATION_PASSES)
    n_dilated = int(seen_after.sum()) - n_seen

    remaining = ~seen_after
    if np.any(remaining):
        fill = texel_rgb[seen_after].mean(axis=0) if np.any(seen_after) else np.full(3, 0.5)
        texel_rgb[remaining] = fill

    report = {
        "texels_covered": int(covered.sum()),
        "texels_seen": n_seen,
        "texels_dilated": n_dilated,
        "texels_unseen_filled": int(remaining.sum()),
        "views": len(views),
    }
    texture = ImageRGBA(
        np.concatenate([np.clip(texel_rgb, 0, 1), np.ones((texture_size, texture_size, 1))], axis=2)
    )
    return mesh.with_texture(texture), report


def _dilate(rgb, seen, passes):
    """Spread painted colors into unseen neighbors, 4-neighborhood mean."""
    rgb = rgb.copy()
    rgb[~seen] = 0.0
    seen = seen.copy()
    for _ in range(passes):
        if seen.all():
            break
        acc = np.zeros_like(rgb)
        cnt = np.zeros(seen.shape)
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            shifted = np.roll(seen, (dy, dx), axis=(0, 1))
            shifted_rgb = np.roll(rgb, (dy, dx), axis=(0, 1))
            if dy == 1:
                shifted[0, :] = False
            elif dy == -1:
                shifted[-1, :] = False
            if dx == 1:
                shifted[:, 0] = False
            elif dx == -1:
                shifted[:, -1] = False
            acc += np.where(shifted[..., None], shifted_rgb, 0.0)
            cnt += shifted
        grow = (~seen) & (cnt > 0)
        rgb[grow] = acc[grow] / cnt[grow][:, None]
        seen = seen | grow
    return rgb, seen
