"""Float-image resampling helpers built on Pillow's float32 path.

Images stay floating point through the whole pipeline; quantization happens
only at PNG export.
"""

import numpy as np
from PIL import Image

from .types import ImageRGBA


def _resize_channels(pixels, width, height, resample):
    out = np.empty((height, width, pixels.shape[2]))
    for c in range(pixels.shape[2]):
        chan = Image.fromarray(pixels[:, :, c].astype(np.float32), mode="F")
        out[:, :, c] = np.asarray(chan.resize((width, height), resample=resample), dtype=np.float64)
    return out


def downsample_image(image, width, height):
    """Area-average (box) resampling; never overshoots [0, 1]."""
    out = _resize_channels(image.pixels, width, height, Image.Resampling.BOX)
    return ImageRGBA(np.clip(out, 0.0, 1.0))


def upsample_bicubic(image, factor):
    """Bicubic upscaling by an integer factor; output clipped to [0, 1]."""
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return image
    out = _resize_channels(
        image.pixels, image.width * factor, image.height * factor, Image.Resampling.BICUBIC
    )
    return ImageRGBA(np.clip(out, 0.0, 1.0))


def premultiply_over_black(image):
    """Composite straight-alpha RGBA onto a black background (RGB *= A)."""
    px = image.pixels.copy()
    px[:, :, :3] *= px[:, :, 3:4]
    return ImageRGBA(px)
