"""Z-buffered triangle rasterization with bilinear texture sampling.

The forward pass records each covered pixel's four texel footprints so the
backward pass can push image-space gradients onto individual texels; mesh
geometry itself is never differentiated. Triangles rasterize serially in
index order with a strict depth test, so output is deterministic for any
worker count.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ContractViolationError

ZNEAR = 0.01
BACKFACE_EPS = 1e-12


@dataclass
class MeshTape:
    texel_index: np.ndarray  # (H, W, 4) int64 flat texel ids, -1 when empty
    texel_weight: np.ndarray  # (H, W, 4) float64 bilinear weights
    texture_shape: tuple
    consumed: bool = False


@dataclass
class MeshRenderOutput:
    rgb: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W) coverage
    depth: np.ndarray  # (H, W) view-space z, +inf where empty
    tape: MeshTape


@njit(cache=True)
def _raster_kernel(
    pts,  # (V, 3): pixel x, pixel y, view z
    uvs,  # (V, 2)
    tris,  # (T, 3)
    tex,  # (TH, TW, 3)
    width,
    height,
    out_rgb,
    out_alpha,
    out_depth,
    out_tidx,
    out_tw,
):
    th, tw = tex.shape[0], tex.shape[1]
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        z0, z1, z2 = pts[i0, 2], pts[i1, 2], pts[i2, 2]
        if z0 < ZNEAR or z1 < ZNEAR or z2 < ZNEAR:
            continue
        x0, y0 = pts[i0, 0], pts[i0, 1]
        x1, y1 = pts[i1, 0], pts[i1, 1]
        x2, y2 = pts[i2, 0], pts[i2, 1]
        # outward-facing triangles wind negative in pixel coords (y down)
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area >= -BACKFACE_EPS:
            continue
        lo_x = max(int(np.floor(min(x0, x1, x2) - 0.5)), 0)
        hi_x = min(int(np.ceil(max(x0, x1, x2) - 0.5)), width - 1)
        lo_y = max(int(np.floor(min(y0, y1, y2) - 0.5)), 0)
        hi_y = min(int(np.ceil(max(y0, y1, y2) - 0.5)), height - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        inv_area = 1.0 / area
        iz0, iz1, iz2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        u0, v0 = uvs[i0, 0] * iz0, uvs[i0, 1] * iz0
        u1, v1 = uvs[i1, 0] * iz1, uvs[i1, 1] * iz1
        u2, v2 = uvs[i2, 0] * iz2, uvs[i2, 1] * iz2
        for py in range(lo_y, hi_y + 1):
            cy = py + 0.5
            for px in range(lo_x, hi_x + 1):
                cx = px + 0.5
                w0 = ((x1 - cx) * (y2 - cy) - (y1 - cy) * (x2 - cx)) * inv_area
                w1 = ((x2 - cx) * (y0 - cy) - (y2 - cy) * (x0 - cx)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                inv_z = w0 * iz0 + w1 * iz1 + w2 * iz2
                z = 1.0 / inv_z
                if z >= out_depth[py, px]:
                    continue
                u = (w0 * u0 + w1 * u1 + w2 * u2) * z
                v = (w0 * v0 + w1 * v1 + w2 * v2) * z
                # bilinear texel footprint, clamp-to-edge
                fx = u * tw - 0.5
                fy = v * th - 0.5
                ix = int(np.floor(fx))
                iy = int(np.floor(fy))
                ax = fx - ix
                ay = fy - iy
                ix0 = min(max(ix, 0), tw - 1)
                ix1 = min(max(ix + 1, 0), tw - 1)
                iy0 = min(max(iy, 0), th - 1)
                iy1 = min(max(iy + 1, 0), th - 1)
                b00 = (1.0 - ax) * (1.0 - ay)
                b10 = ax * (1.0 - ay)
                b01 = (1.0 - ax) * ay
                b11 = ax * ay
                r = (
                    b00 * tex[iy0, ix0, 0]
                    + b10 * tex[iy0, ix1, 0]
                    + b01 * tex[iy1, ix0, 0]
                    + b11 * tex[iy1, ix1, 0]
                )
                g = (
                    b00 * tex[iy0, ix0, 1]
                    + b10 * tex[iy0, ix1, 1]
                    + b01 * tex[iy1, ix0, 1]
                    + b11 * tex[iy1, ix1, 1]
                )
                b = (
                    b00 * tex[iy0, ix0, 2]
                    + b10 * tex[iy0, ix1, 2]
                    + b01 * tex[iy1, ix0, 2]
                    + b11 * tex[iy1, ix1, 2]
                )
                out_depth[py, px] = z
                out_rgb[py, px, 0] = r
                out_rgb[py, px, 1] = g
                out_rgb[py, px, 2] = b
                out_alpha[py, px] = 1.0
                out_tidx[py, px, 0] = iy0 * tw + ix0
                out_tidx[py, px, 1] = iy0 * tw + ix1
                out_tidx[py, px, 2] = iy1 * tw + ix0
                out_tidx[py, px, 3] = iy1 * tw + ix1
                out_tw[py, px, 0] = b00
                out_tw[py, px, 1] = b10
                out_tw[py, px, 2] = b01
                out_tw[py, px, 3] = b11


@njit(cache=True)
def _scatter_texel_grads(texel_index, texel_weight, grad_rgb, out):
    h, w = texel_index.shape[0], texel_index.shape[1]
    tw = out.shape[1]
    for py in range(h):
        for px in range(w):
            if texel_index[py, px, 0] < 0:
                continue
            gr = grad_rgb[py, px, 0]
            gg = grad_rgb[py, px, 1]
            gb = grad_rgb[py, px, 2]
            for k in range(4):
                t = texel_index[py, px, k]
                wgt = texel_weight[py, px, k]
                ty = t // tw
                tx = t % tw
                out[ty, tx, 0] += wgt * gr
                out[ty, tx, 1] += wgt * gg
                out[ty, tx, 2] += wgt * gb


def render_mesh(mesh, camera):
    """Render a textured mesh; tape records texel footprints for backward."""
    if mesh.uvs is None or mesh.texture is None:
        raise ContractViolationError("render_mesh needs a UV-mapped, textured mesh")
    width, height = camera.width, camera.height
    fx, fy, cx, cy = camera.intrinsics()
    view = camera.to_view(mesh.vertices)
    z = view[:, 2]
    safe_z = np.where(z > ZNEAR, z, 1.0)
    pts = np.stack(
        [fx * view[:, 0] / safe_z + cx, fy * view[:, 1] / safe_z + cy, z], axis=1
    )

    tex = np.ascontiguousarray(mesh.texture.rgb)
    rgb = np.zeros((height, width, 3))
    alpha = np.zeros((height, width))
    depth = np.full((height, width), np.inf)
    tidx = np.full((height, width, 4), -1, dtype=np.int64)
    tw = np.zeros((height, width, 4))
    if len(mesh.triangles):
        _raster_kernel(
            pts,
            np.ascontiguousarray(mesh.uvs),
            mesh.triangles.astype(np.int64),
            tex,
            width,
            height,
            rgb,
            alpha,
            depth,
            tidx,
            tw,
        )
    tape = MeshTape(texel_index=tidx, texel_weight=tw, texture_shape=tex.shape)
    return MeshRenderOutput(rgb=rgb, alpha=alpha, depth=depth, tape=tape)


def mesh_backward(output, grad_rgb):
    """dL/d(texel) for L = sum(grad_rgb * rgb); exact for the bilinear model."""
    tape = output.tape
    if tape.consumed:
        raise ContractViolationError("mesh tape already consumed")
    grad_rgb = np.ascontiguousarray(grad_rgb, dtype=np.float64)
    if grad_rgb.shape != output.rgb.shape:
        raise ContractViolationError(
            f"grad shape {grad_rgb.shape} does not match render {output.rgb.shape}"
        )
    tape.consumed = True
    out = np.zeros(tape.texture_shape)
    _scatter_texel_grads(tape.texel_index, tape.texel_weight, grad_rgb, out)
    return out
