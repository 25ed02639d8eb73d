"""Differentiable forward rendering of Gaussian clouds.

render() composites projected splats front-to-back per pixel on 16x16 tiles;
backward() replays the composite to produce exact gradients for every cloud
parameter given upstream image-space gradients.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolationError
from ..parallel import apply_thread_cap
from . import kernels
from .projection import geometry_backward, project_cloud

RESOLUTION_RANGE = (64, 1024)


@dataclass
class ParamGradients:
    """Loss gradients per Gaussian, in parameter (log/logit/raw) space."""

    centers: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    view_grad_norm: np.ndarray  # |dL/d mean2d| scaled to half-resolution units

    def __iadd__(self, other):
        self.centers += other.centers
        self.log_scales += other.log_scales
        self.rotations += other.rotations
        self.opacity_logits += other.opacity_logits
        self.colors += other.colors
        self.view_grad_norm += other.view_grad_norm
        return self

    @classmethod
    def zeros(cls, n):
        return cls(
            centers=np.zeros((n, 3)),
            log_scales=np.zeros((n, 3)),
            rotations=np.zeros((n, 4)),
            opacity_logits=np.zeros(n),
            colors=np.zeros((n, 3)),
            view_grad_norm=np.zeros(n),
        )


class RenderTape:
    """Single-use record tying a render to its backward pass."""

    def __init__(self, proj, tile_starts, pair_splat, width, height, tiles_x, n_gaussians):
        self.proj = proj
        self.tile_starts = tile_starts
        self.pair_splat = pair_splat
        self.width = width
        self.height = height
        self.tiles_x = tiles_x
        self.n_gaussians = n_gaussians
        self.consumed = False

    @property
    def skipped_degenerate(self):
        return self.proj.skipped_degenerate if self.proj is not None else 0


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (H, W, 3) float64
    alpha: np.ndarray  # (H, W) float64
    tape: RenderTape


def _check_resolution(width, height):
    lo, hi = RESOLUTION_RANGE
    if width != height or not (lo <= width <= hi):
        raise ContractViolationError(
            f"render resolution must be square in [{lo}, {hi}], got {width}x{height}"
        )


def _build_tile_lists(proj, width, height):
    """Assign splats to the 16x16 tiles their cutoff ellipse bbox overlaps.

    Pairs are ordered by (tile, view depth, splat index); the stable lexsort
    makes the per-pixel walk order deterministic.
    """
    tile = kernels.TILE
    tiles_x = (width + tile - 1) // tile
    tiles_y = (height + tile - 1) // tile
    n_tiles = tiles_x * tiles_y

    idx = np.flatnonzero(proj.valid)
    if len(idx) == 0:
        return np.zeros(n_tiles + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), tiles_x

    lo = proj.mean2d[idx] - proj.extent[idx]
    hi = proj.mean2d[idx] + proj.extent[idx]
    tx0 = np.clip(np.floor(lo[:, 0] / tile).astype(np.int64), 0, tiles_x - 1)
    ty0 = np.clip(np.floor(lo[:, 1] / tile).astype(np.int64), 0, tiles_y - 1)
    tx1 = np.clip(np.floor(hi[:, 0] / tile).astype(np.int64), 0, tiles_x - 1)
    ty1 = np.clip(np.floor(hi[:, 1] / tile).astype(np.int64), 0, tiles_y - 1)
    on_screen = (hi[:, 0] >= 0) & (hi[:, 1] >= 0) & (lo[:, 0] < width) & (lo[:, 1] < height)

    counts = np.where(on_screen, (tx1 - tx0 + 1) * (ty1 - ty0 + 1), 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(n_tiles + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), tiles_x

    pair_tile = np.empty(total, dtype=np.int64)
    pair_splat = np.empty(total, dtype=np.int64)
    kernels.expand_pairs(idx, tx0, tx1, ty0, ty1, counts, tiles_x, pair_tile, pair_splat)

    order = np.lexsort((pair_splat, proj.depth[pair_splat], pair_tile))
    pair_tile = pair_tile[order]
    pair_splat = pair_splat[order]
    tile_starts = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(pair_tile, minlength=n_tiles), out=tile_starts[1:])
    return tile_starts, pair_splat, tiles_x


def render(cloud, camera, weight_floor=None):
    """Render RGB + alpha over a black/transparent background.

    Splats composite front-to-back sorted by view-space center depth;
    per-pixel transmittance stops early below 1e-4. Degenerate projected
    covariances are skipped and counted on the tape, never fatal.

    weight_floor sets where each splat's footprint is truncated (default
    1e-12, i.e. numerically exact). Training passes a looser floor to trade
    a bounded per-pixel bias for smaller footprints.
    """
    width, height = camera.width, camera.height
    _check_resolution(width, height)
    apply_thread_cap()

    rgb = np.zeros((height, width, 3))
    alpha = np.zeros((height, width))

    from .projection import WEIGHT_FLOOR

    proj = project_cloud(cloud, camera, weight_floor or WEIGHT_FLOOR)
    tile_starts, pair_splat, tiles_x = _build_tile_lists(proj, width, height)
    tape = RenderTape(proj, tile_starts, pair_splat, width, height, tiles_x, len(cloud))
    if len(pair_splat):
        kernels.composite_forward(
            tile_starts,
            pair_splat,
            proj.mean2d,
            proj.conic,
            proj.alpha,
            proj.color,
            proj.q_cut,
            width,
            height,
            tiles_x,
            rgb,
            alpha,
        )
    return RenderOutput(rgb=rgb, alpha=alpha, tape=tape)


def backward(output, grad_rgb, grad_alpha):
    """Exact gradients of L = sum(grad_rgb * rgb) + sum(grad_alpha * alpha).

    The tape is single-use; a second backward on the same output raises.
    """
    tape = output.tape
    if tape.consumed:
        raise ContractViolationError("render tape already consumed by a backward pass")
    grad_rgb = np.ascontiguousarray(grad_rgb, dtype=np.float64)
    grad_alpha = np.ascontiguousarray(grad_alpha, dtype=np.float64)
    if grad_rgb.shape != (tape.height, tape.width, 3):
        raise ContractViolationError(
            f"grad_rgb shape {grad_rgb.shape} does not match render {tape.height}x{tape.width}"
        )
    if grad_alpha.shape != (tape.height, tape.width):
        raise ContractViolationError(
            f"grad_alpha shape {grad_alpha.shape} does not match render {tape.height}x{tape.width}"
        )
    tape.consumed = True
    apply_thread_cap()

    n = tape.n_gaussians
    grads = ParamGradients.zeros(n)
    if n == 0 or len(tape.pair_splat) == 0:
        return grads

    proj = tape.proj
    n_pairs = len(tape.pair_splat)
    slot_mean = np.zeros((n_pairs, 2))
    slot_conic = np.zeros((n_pairs, 3))
    slot_alpha = np.zeros(n_pairs)
    slot_color = np.zeros((n_pairs, 3))
    kernels.composite_backward(
        tape.tile_starts,
        tape.pair_splat,
        proj.mean2d,
        proj.conic,
        proj.alpha,
        proj.color,
        proj.q_cut,
        tape.width,
        tape.height,
        tape.tiles_x,
        grad_rgb,
        grad_alpha,
        slot_mean,
        slot_conic,
        slot_alpha,
        slot_color,
    )

    g_mean2d = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_alpha = np.zeros(n)
    g_color = np.zeros((n, 3))
    kernels.merge_slot_gradients(
        tape.pair_splat,
        slot_mean,
        slot_conic,
        slot_alpha,
        slot_color,
        g_mean2d,
        g_conic,
        g_alpha,
        g_color,
    )

    param = geometry_backward(proj, g_mean2d, g_conic, g_alpha, g_color)
    grads.centers[:] = param["centers"]
    grads.log_scales[:] = param["log_scales"]
    grads.rotations[:] = param["rotations"]
    grads.opacity_logits[:] = param["opacity_logits"]
    grads.colors[:] = param["colors"]
    # densification statistic: screen-space positional gradient in units of
    # half the frame (resolution independent)
    grads.view_grad_norm[:] = np.linalg.norm(g_mean2d, axis=1) * (tape.width / 2.0)
    return grads
