"""Perceptual image comparison through explicit feature embeddings.

The default metric embeds an image as window statistics (8x8 means and
standard deviations per channel) at three dyadic scales and compares
embeddings by Euclidean distance. It is deterministic, symmetric, zero on
identical images, bounded by ~2, and piecewise-differentiable, which is all
the training loop needs from its perceptual scorer.
"""

from typing import Protocol

import numpy as np

from .errors import ContractViolationError

WINDOW = 8
SCALES = (1, 2, 4)
MIN_RESOLUTION = 32
DISTANCE_GAIN = 1.5  # calibrates distance(black, white) == DISTANCE_GAIN
VAR_EPS = 1e-8


class PerceptualMetric(Protocol):
    """Plugin seam for perceptual scoring.

    distance(a, b) must equal the Euclidean distance between embed(a) and
    embed(b); implementations that cannot express themselves this way do not
    fit the seam.
    """

    def embed(self, image: np.ndarray) -> np.ndarray: ...

    def distance(self, image_a: np.ndarray, image_b: np.ndarray) -> float: ...


def _as_rgb(image):
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ContractViolationError(f"expected (H, W, >=3) image, got {arr.shape}")
    return arr[:, :, :3]


def _box_downsample(img, factor):
    if factor == 1:
        return img
    h = (img.shape[0] // factor) * factor
    w = (img.shape[1] // factor) * factor
    v = img[:h, :w].reshape(h // factor, factor, w // factor, factor, 3)
    return v.mean(axis=(1, 3))


def _window_stats(img):
    """Non-overlapping 8x8 window means and stds, (wy, wx, 3) each."""
    h = (img.shape[0] // WINDOW) * WINDOW
    w = (img.shape[1] // WINDOW) * WINDOW
    v = img[:h, :w].reshape(h // WINDOW, WINDOW, w // WINDOW, WINDOW, 3)
    mean = v.mean(axis=(1, 3))
    var = v.var(axis=(1, 3))
    std = np.sqrt(var + VAR_EPS)
    return mean, std, var


class StatsPerceptualMetric:
    """Default multi-scale window-statistics metric (see module docstring)."""

    def __init__(self, gain=DISTANCE_GAIN):
        self.gain = float(gain)

    def embed(self, image):
        """Embedding whose L2 distance realizes the metric, 1D float64."""
        rgb = _as_rgb(image)
        if rgb.shape[0] < MIN_RESOLUTION or rgb.shape[1] < MIN_RESOLUTION:
            raise ContractViolationError(
                f"metric needs at least {MIN_RESOLUTION}x{MIN_RESOLUTION} pixels, got {rgb.shape[:2]}"
            )
        parts = []
        for scale in SCALES:
            small = _box_downsample(rgb, scale)
            mean, std, _ = _window_stats(small)
            weight = self.gain / np.sqrt(len(SCALES) * mean.size)
            parts.append((mean * weight).ravel())
            parts.append((std * weight).ravel())
        return np.concatenate(parts)

    def distance(self, image_a, image_b):
        a = self.embed(image_a)
        b = self.embed(image_b)
        if a.shape != b.shape:
            raise ContractViolationError("images must share a resolution")
        return float(np.linalg.norm(a - b))

    def embed_backward(self, image, grad_embedding):
        """Vector-Jacobian product of embed at `image` (exact local gradient)."""
        rgb = _as_rgb(image)
        grad_img = np.zeros_like(rgb)
        offset = 0
        for scale in SCALES:
            small = _box_downsample(rgb, scale)
            mean, std, var = _window_stats(small)
            weight = self.gain / np.sqrt(len(SCALES) * mean.size)
            g_mean = grad_embedding[offset : offset + mean.size].reshape(mean.shape) * weight
            offset += mean.size
            g_std = grad_embedding[offset : offset + std.size].reshape(std.shape) * weight
            offset += std.size

            h = (small.shape[0] // WINDOW) * WINDOW
            w = (small.shape[1] // WINDOW) * WINDOW
            npix = WINDOW * WINDOW
            view = np.ascontiguousarray(small[:h, :w]).reshape(
                h // WINDOW, WINDOW, w // WINDOW, WINDOW, 3
            )
            g_var = g_std / (2.0 * std)  # std = sqrt(var + eps)
            dev = view - mean[:, None, :, None, :]
            g_view = np.broadcast_to(
                g_mean[:, None, :, None, :] / npix, view.shape
            ) + g_var[:, None, :, None, :] * 2.0 * dev / npix
            g_small = np.zeros_like(small)
            g_small[:h, :w] = g_view.reshape(h, w, 3)
            # undo the box downsample: spread uniformly over the source block
            hs = g_small.shape[0] * scale
            ws = g_small.shape[1] * scale
            spread = np.repeat(np.repeat(g_small, scale, axis=0), scale, axis=1)
            grad_img[:hs, :ws] += spread / (scale * scale)
        if offset != grad_embedding.size:
            raise ContractViolationError("grad_embedding length does not match this image")
        return grad_img


def default_perceptual_distance(image_a, image_b):
    """Distance under the default metric; requires equal resolutions >= 32."""
    a = _as_rgb(image_a)
    b = _as_rgb(image_b)
    if a.shape != b.shape:
        raise ContractViolationError(f"resolution mismatch {a.shape} vs {b.shape}")
    return StatsPerceptualMetric().distance(a, b)
