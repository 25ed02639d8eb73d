"""splatforge: differentiable 3D Gaussian splatting with an image-to-3D pipeline.

Stage 1 optimizes a Gaussian cloud against a reference image, pluggable
view guidance, and a count-weighted triplet loss over perceptual embeddings.
The cloud is then meshed (density grid, marching cubes, UV atlas, multi-view
color baking) and stage 2 refines the texture against a pluggable refiner.
"""

__version__ = "0.1.0"

from .types import Camera, CameraSample, Gaussian3D, GaussianCloud, ImageRGBA

__all__ = [
    "Camera",
    "CameraSample",
    "Gaussian3D",
    "GaussianCloud",
    "ImageRGBA",
    "__version__",
]
