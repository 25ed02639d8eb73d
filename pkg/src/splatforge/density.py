"""Weighted-opacity density field of a Gaussian cloud on a 128^3 grid.

The (-1, 1)^3 box splits into 16 blocks of 8 samples per axis (voxel-center
positions, spacing 2/128). Per block, Gaussians whose 3-sigma bounding box
misses the block padded by that same extent are culled before evaluation;
the survivors contribute alpha_i * exp(-0.5 Mahalanobis^2) at each corner.
Opacities are used unnormalized, which is what makes an absolute density
threshold meaningful for surface extraction.
"""

from dataclasses import dataclass

import math

import numpy as np
from numba import njit, prange

from .errors import ContractViolationError
from .geometry import covariances_from_cloud_arrays
from .parallel import apply_thread_cap

BLOCKS_PER_AXIS = 16
SAMPLES_PER_BLOCK = 8
GRID_RESOLUTION = BLOCKS_PER_AXIS * SAMPLES_PER_BLOCK  # 128
DOMAIN_MIN, DOMAIN_MAX = -1.0, 1.0
CULL_SIGMA = 3.0
MIN_SCALE = 1e-6  # below this the covariance is numerically singular


def grid_coordinates():
    """Voxel-center sample positions along one axis (128 points)."""
    step = (DOMAIN_MAX - DOMAIN_MIN) / GRID_RESOLUTION
    return DOMAIN_MIN + step * (np.arange(GRID_RESOLUTION) + 0.5)


@dataclass
class DensityGrid:
    """Scalar density values at the 128^3 sample positions."""

    values: np.ndarray  # (128, 128, 128), indexed [ix, iy, iz]
    skipped_singular: int = 0

    def __post_init__(self):
        want = (GRID_RESOLUTION,) * 3
        if self.values.shape != want:
            raise ContractViolationError(f"grid must be {want}, got {self.values.shape}")

    @property
    def dims(self):
        return self.values.shape

    @property
    def voxel_size(self):
        return (DOMAIN_MAX - DOMAIN_MIN) / GRID_RESOLUTION


def _prepare_gaussians(cloud):
    """Per-Gaussian inverse covariance, opacity, and 3-sigma extent arrays."""
    cov = covariances_from_cloud_arrays(cloud.log_scales, cloud.rotations)
    scales = cloud.scales
    alphas = cloud.opacities
    centers = cloud.centers.astype(np.float64)

    usable = scales.min(axis=1) > MIN_SCALE
    skipped = int(np.count_nonzero(~usable))

    inv = np.zeros_like(cov)
    if np.any(usable):
        inv[usable] = np.linalg.inv(cov[usable])
    # tight 3-sigma axis-aligned half extents
    half = CULL_SIGMA * np.sqrt(np.maximum(np.diagonal(cov, axis1=1, axis2=2), 0.0))
    return centers, inv, alphas, half, usable, skipped


@njit(cache=True, parallel=True)
def _accumulate_blocks(
    block_starts,
    block_gaussian,
    centers,
    inv_cov,
    alphas,
    coords,
    out,
):
    n_blocks_axis = BLOCKS_PER_AXIS
    n_blocks = n_blocks_axis**3
    for block in prange(n_blocks):
        bz = block % n_blocks_axis
        by = (block // n_blocks_axis) % n_blocks_axis
        bx = block // (n_blocks_axis * n_blocks_axis)
        s = block_starts[block]
        e = block_starts[block + 1]
        if s == e:
            continue
        x0 = bx * SAMPLES_PER_BLOCK
        y0 = by * SAMPLES_PER_BLOCK
        z0 = bz * SAMPLES_PER_BLOCK
        for k in range(s, e):
            g = block_gaussian[k]
            cx = centers[g, 0]
            cy = centers[g, 1]
            cz = centers[g, 2]
            a00 = inv_cov[g, 0, 0]
            a01 = inv_cov[g, 0, 1]
            a02 = inv_cov[g, 0, 2]
            a11 = inv_cov[g, 1, 1]
            a12 = inv_cov[g, 1, 2]
            a22 = inv_cov[g, 2, 2]
            alpha = alphas[g]
            for ix in range(x0, x0 + SAMPLES_PER_BLOCK):
                dx = coords[ix] - cx
                for iy in range(y0, y0 + SAMPLES_PER_BLOCK):
                    dy = coords[iy] - cy
                    for iz in range(z0, z0 + SAMPLES_PER_BLOCK):
                        dz = coords[iz] - cz
                        q = (
                            a00 * dx * dx
                            + a11 * dy * dy
                            + a22 * dz * dz
                            + 2.0 * (a01 * dx * dy + a02 * dx * dz + a12 * dy * dz)
                        )
                        if q < 1490.0:  # exp underflows to exactly 0 past this
                            out[ix, iy, iz] += alpha * math.exp(-0.5 * q)


def local_density_query(cloud):
    """Density grid of the cloud with per-block culling (see module docstring).

    Gaussians with near-zero scales are skipped and counted on the result.
    """
    if len(cloud) == 0:
        raise ContractViolationError("density query needs a non-empty cloud")
    apply_thread_cap()
    centers, inv, alphas, half, usable, skipped = _prepare_gaussians(cloud)

    coords = grid_coordinates()
    step = coords[1] - coords[0]
    # Block b samples positions coords[8b .. 8b+7]. The Gaussian's 3-sigma
    # box [c - h, c + h] must meet block b expanded by h again, so per axis
    # the survivors satisfy c + 2h >= block_lo(b) and c - 2h <= block_hi(b).
    idx = np.flatnonzero(usable)
    lo = np.empty((len(idx), 3), dtype=np.int64)
    hi = np.empty((len(idx), 3), dtype=np.int64)
    for axis in range(3):
        c = centers[idx, axis]
        pad = 2.0 * half[idx, axis]
        # block_lo(b) = -1 + step (8b + 0.5); block_hi(b) = -1 + step (8b + 7.5)
        b_max = np.floor((((c + pad + 1.0) / step) - 0.5) / SAMPLES_PER_BLOCK)
        b_min = np.ceil((((c - pad + 1.0) / step) - 7.5) / SAMPLES_PER_BLOCK)
        lo[:, axis] = np.maximum(b_min, 0)
        hi[:, axis] = np.minimum(b_max, BLOCKS_PER_AXIS - 1)

    spans = np.maximum(hi - lo + 1, 0)
    counts = spans[:, 0] * spans[:, 1] * spans[:, 2]
    total = int(counts.sum())

    out = np.zeros((GRID_RESOLUTION,) * 3)
    if total:
        pair_block = np.empty(total, dtype=np.int64)
        pair_gauss = np.empty(total, dtype=np.int64)
        _expand_block_pairs(idx, lo, hi, counts, pair_block, pair_gauss)
        order = np.lexsort((pair_gauss, pair_block))
        pair_block = pair_block[order]
        pair_gauss = pair_gauss[order]
        n_blocks = BLOCKS_PER_AXIS**3
        starts = np.zeros(n_blocks + 1, dtype=np.int64)
        np.cumsum(np.bincount(pair_block, minlength=n_blocks), out=starts[1:])
        _accumulate_blocks(starts, pair_gauss, centers, inv, alphas, coords, out)

    return DensityGrid(values=out, skipped_singular=skipped)


@njit(cache=True)
def _expand_block_pairs(idx, lo, hi, counts, pair_block, pair_gauss):
    pos = 0
    nb = BLOCKS_PER_AXIS
    for k in range(idx.shape[0]):
        if counts[k] == 0:
            continue
        for bx in range(lo[k, 0], hi[k, 0] + 1):
            for by in range(lo[k, 1], hi[k, 1] + 1):
                for bz in range(lo[k, 2], hi[k, 2] + 1):
                    pair_block[pos] = (bx * nb + by) * nb + bz
                    pair_gauss[pos] = idx[k]
                    pos += 1
