"""8-bit RGBA PNG export/import.

Floats quantize once at export with round-half-even (numpy rint); loading
maps back through /255. Nothing inside the pipeline ever quantizes.
"""

import numpy as np
from PIL import Image

from .types import ImageRGBA


def save_png(image, path):
    data = np.rint(image.pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGBA").save(path, format="PNG")


def load_png(path):
    with Image.open(path) as img:
        rgba = np.asarray(img.convert("RGBA"), dtype=np.float64) / 255.0
    return ImageRGBA(rgba)


def save_rgb_png(rgb, path, alpha=None):
    """Convenience wrapper for bare (H, W, 3) float arrays."""
    rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    if alpha is None:
        alpha = np.ones(rgb.shape[:2])
    save_png(ImageRGBA.from_rgb_alpha(rgb, np.clip(alpha, 0.0, 1.0)), path)
