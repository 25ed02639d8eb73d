"""Numba kernels for tile-based splat compositing, forward and backward.

Parallelism is over tiles; every tile owns a disjoint pixel block and a
disjoint slice of the pair-slot gradient buffers, so results are
bit-identical for any worker count. The per-splat gradient merge runs
serially in pair order.
"""

import math

import numpy as np
from numba import njit, prange

TILE = 16
TRANSMITTANCE_FLOOR = 1e-4


@njit(cache=True, parallel=True)
def composite_forward(
    tile_starts,
    pair_splat,
    mean2d,
    conic,
    alpha,
    color,
    q_cut,
    width,
    height,
    tiles_x,
    out_rgb,
    out_alpha,
):
    n_tiles = tile_starts.shape[0] - 1
    for tile in prange(n_tiles):
        start = tile_starts[tile]
        end = tile_starts[tile + 1]
        ty = tile // tiles_x
        tx = tile % tiles_x
        y0 = ty * TILE
        x0 = tx * TILE
        y1 = min(y0 + TILE, height)
        x1 = min(x0 + TILE, width)
        for py in range(y0, y1):
            cy = py + 0.5
            for px in range(x0, x1):
                cx = px + 0.5
                trans = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                for k in range(start, end):
                    i = pair_splat[k]
                    dx = cx - mean2d[i, 0]
                    dy = cy - mean2d[i, 1]
                    q = (
                        conic[i, 0] * dx * dx
                        + 2.0 * conic[i, 1] * dx * dy
                        + conic[i, 2] * dy * dy
                    )
                    if q > q_cut[i] or q < 0.0:
                        continue
                    w = alpha[i] * math.exp(-0.5 * q)
                    wt = w * trans
                    r += color[i, 0] * wt
                    g += color[i, 1] * wt
                    b += color[i, 2] * wt
                    trans *= 1.0 - w
                    if trans < TRANSMITTANCE_FLOOR:
                        break
                out_rgb[py, px, 0] = r
                out_rgb[py, px, 1] = g
                out_rgb[py, px, 2] = b
                out_alpha[py, px] = 1.0 - trans


@njit(cache=True, parallel=True)
def composite_backward(
    tile_starts,
    pair_splat,
    mean2d,
    conic,
    alpha,
    color,
    q_cut,
    width,
    height,
    tiles_x,
    grad_rgb,
    grad_alpha,
    slot_mean,
    slot_conic,
    slot_alpha,
    slot_color,
):
    """Replays each pixel's forward walk, then sweeps it back-to-front.

    For pixel value C = sum_i c_i w_i T_i and A = sum_i w_i T_i with
    T_i = prod_{j<i} (1 - w_j):
        dL/dc_i = g_rgb * w_i T_i
        dL/dw_i = T_i (g_rgb . c_i + g_a) - S_i / (1 - w_i)
    where S_i accumulates (g_rgb . c_j + g_a) w_j T_j over splats behind i.
    Truncated splats (early exit) contribute exactly zero, matching forward.
    """
    n_tiles = tile_starts.shape[0] - 1
    for tile in prange(n_tiles):
        start = tile_starts[tile]
        end = tile_starts[tile + 1]
        if start == end:
            continue
        cap = end - start
        buf_slot = np.empty(cap, dtype=np.int64)
        buf_w = np.empty(cap, dtype=np.float64)
        buf_t = np.empty(cap, dtype=np.float64)
        ty = tile // tiles_x
        tx = tile % tiles_x
        y0 = ty * TILE
        x0 = tx * TILE
        y1 = min(y0 + TILE, height)
        x1 = min(x0 + TILE, width)
        for py in range(y0, y1):
            cy = py + 0.5
            for px in range(x0, x1):
                gr = grad_rgb[py, px, 0]
                gg = grad_rgb[py, px, 1]
                gb = grad_rgb[py, px, 2]
                ga = grad_alpha[py, px]
                if gr == 0.0 and gg == 0.0 and gb == 0.0 and ga == 0.0:
                    continue
                cx = px + 0.5
                trans = 1.0
                count = 0
                for k in range(start, end):
                    i = pair_splat[k]
                    dx = cx - mean2d[i, 0]
                    dy = cy - mean2d[i, 1]
                    q = (
                        conic[i, 0] * dx * dx
                        + 2.0 * conic[i, 1] * dx * dy
                        + conic[i, 2] * dy * dy
                    )
                    if q > q_cut[i] or q < 0.0:
                        continue
                    w = alpha[i] * math.exp(-0.5 * q)
                    buf_slot[count] = k
                    buf_w[count] = w
                    buf_t[count] = trans
                    count += 1
                    trans *= 1.0 - w
                    if trans < TRANSMITTANCE_FLOOR:
                        break
                behind = 0.0
                for m in range(count - 1, -1, -1):
                    k = buf_slot[m]
                    i = pair_splat[k]
                    w = buf_w[m]
                    t_before = buf_t[m]
                    wt = w * t_before
                    gdot = gr * color[i, 0] + gg * color[i, 1] + gb * color[i, 2] + ga
                    dldw = t_before * gdot - behind / (1.0 - w)
                    behind += gdot * wt
                    slot_color[k, 0] += gr * wt
                    slot_color[k, 1] += gg * wt
                    slot_color[k, 2] += gb * wt
                    slot_alpha[k] += (w / alpha[i]) * dldw
                    gq = -0.5 * w * dldw
                    dx = cx - mean2d[i, 0]
                    dy = cy - mean2d[i, 1]
                    slot_conic[k, 0] += gq * dx * dx
                    slot_conic[k, 1] += gq * 2.0 * dx * dy
                    slot_conic[k, 2] += gq * dy * dy
                    slot_mean[k, 0] += gq * (-2.0) * (conic[i, 0] * dx + conic[i, 1] * dy)
                    slot_mean[k, 1] += gq * (-2.0) * (conic[i, 1] * dx + conic[i, 2] * dy)


@njit(cache=True)
def expand_pairs(idx, tx0, tx1, ty0, ty1, counts, tiles_x, pair_tile, pair_splat):
    pos = 0
    for k in range(idx.shape[0]):
        if counts[k] == 0:
            continue
        for ty in range(ty0[k], ty1[k] + 1):
            base = ty * tiles_x
            for tx in range(tx0[k], tx1[k] + 1):
                pair_tile[pos] = base + tx
                pair_splat[pos] = idx[k]
                pos += 1


@njit(cache=True)
def merge_slot_gradients(
    pair_splat,
    slot_mean,
    slot_conic,
    slot_alpha,
    slot_color,
    g_mean2d,
    g_conic,
    g_alpha,
    g_color,
):
    """Serial per-splat accumulation in pair order (thread-count independent)."""
    for k in range(pair_splat.shape[0]):
        i = pair_splat[k]
        g_mean2d[i, 0] += slot_mean[k, 0]
        g_mean2d[i, 1] += slot_mean[k, 1]
        g_conic[i, 0] += slot_conic[k, 0]
        g_conic[i, 1] += slot_conic[k, 1]
        g_conic[i, 2] += slot_conic[k, 2]
        g_alpha[i] += slot_alpha[k]
        g_color[i, 0] += slot_color[k, 0]
        g_color[i, 1] += slot_color[k, 1]
        g_color[i, 2] += slot_color[k, 2]
