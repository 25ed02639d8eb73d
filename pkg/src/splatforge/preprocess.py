"""Input-image preparation and the super-resolution seam.

Inputs arrive as pre-masked RGBA (alpha is the foreground mask). They are
composited over black so renders and references compare like for like, then
optionally upscaled. The default upscaler is plain bicubic; a learned
super-resolution model would slot in behind the same interface.
"""

from typing import Protocol

from .errors import ContractViolationError
from .images import premultiply_over_black, upsample_bicubic


class Preprocessor(Protocol):
    """upscale(image, factor) -> image with dims multiplied by factor."""

    def upscale(self, image, factor): ...


class BicubicPreprocessor:
    name = "bicubic"

    def upscale(self, image, factor):
        return upsample_bicubic(image, factor)


class PassthroughPreprocessor:
    name = "none"

    def upscale(self, image, factor):
        return image


def make_preprocessor(kind):
    if kind == "bicubic":
        return BicubicPreprocessor()
    if kind == "none":
        return PassthroughPreprocessor()
    raise ContractViolationError(f"unknown preprocessor {kind!r}; use 'bicubic' or 'none'")


def prepare_reference(image, preprocessor, factor):
    """Mask-composite and upscale the raw input into the training reference."""
    if image.pixels.shape[2] != 4:
        raise ContractViolationError("input must be RGBA")
    alpha = image.alpha
    if float(alpha.max()) - float(alpha.min()) < 1e-6 and float(alpha.min()) >= 1.0 - 1e-6:
        raise ContractViolationError(
            "input alpha channel is blank; supply a pre-masked RGBA image "
            "(background removal is outside this tool)"
        )
    composited = premultiply_over_black(image)
    out = preprocessor.upscale(composited, factor)
    expected = (image.height * factor, image.width * factor)
    if not isinstance(preprocessor, PassthroughPreprocessor) and (out.height, out.width) != expected:
        raise ContractViolationError(
            f"preprocessor returned {(out.height, out.width)}, expected {expected}"
        )
    return out
