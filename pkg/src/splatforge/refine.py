"""Stage-2 texture refinement: perturb, refine, and fit texels by MSE.

Each step renders the textured mesh from a random orbit pose at a random
resolution in [512, 1024], blends the coarse render with noise, hands it to
the pluggable refiner, and descends the mean-squared difference between the
refined target and the coarse render with respect to the texels only.
Geometry never changes here.
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .cameras import sample_training_camera, camera_from_sample
from .errors import ContractViolationError, SplatforgeError
from .raster.mesh_render import mesh_backward, render_mesh
from .types import ImageRGBA

MESH_RESOLUTION_RANGE = (512, 1024)


class TextureRefiner(Protocol):
    """Plugin seam: produce a refined target image from a noisy coarse render.

    Implementations receive the blended (noisy) image, the noise level, and
    the orbit pose, and must return an equal-resolution image in [0, 1];
    given an explicit rng they must be deterministic.
    """

    def refine(self, coarse_rgb, t_start, sample, rng=None): ...


@dataclass
class RefineConfig:
    steps_stage2: int = 50
    t_start: float = 0.5
    views_per_step: int = 1
    texel_lr: float = 0.01
    camera_radius: float = 2.0
    fov_y: float = 49.1
    seed: int = 0

    def __post_init__(self):
        if self.steps_stage2 < 0:
            raise ValueError("steps_stage2 must be >= 0")
        if self.views_per_step < 1:
            raise ValueError("views_per_step must be >= 1")
        if not (0.0 <= self.t_start < 1.0):
            raise ValueError("t_start must lie in [0, 1)")


@dataclass
class RefineReport:
    step: int
    loss: float
    resolution: int
    azimuth: float
    elevation: float
    skipped: bool = False

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class _TexelAdam:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_texture(cls, texture):
        shape = texture.rgb.shape
        return cls(m=np.zeros(shape), v=np.zeros(shape))

    def step(self, grad, lr):
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        self.t += 1
        self.m = beta1 * self.m + (1 - beta1) * grad
        self.v = beta2 * self.v + (1 - beta2) * grad * grad
        m_hat = self.m / (1 - beta1**self.t)
        v_hat = self.v / (1 - beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + eps)


def refine_step(mesh, refiner, config, rng, adam=None, noise_rng=None):
    """One texel update; returns (mesh, RefineReport, adam state).

    Noise draws come from their own stream (noise_rng) so the pose sequence
    is identical whether or not noise is injected.
    """
    if mesh.texture is None or mesh.uvs is None:
        raise ContractViolationError("refine_step needs a textured, UV-mapped mesh")
    if adam is None:
        adam = _TexelAdam.for_texture(mesh.texture)
    if noise_rng is None:
        noise_rng = rng

    texel_grad = np.zeros(mesh.texture.rgb.shape)
    losses = []
    sample = None
    resolution = 0
    for _ in range(config.views_per_step):
        sample = sample_training_camera(rng, radius=config.camera_radius)
        resolution = int(rng.integers(MESH_RESOLUTION_RANGE[0], MESH_RESOLUTION_RANGE[1] + 1))
        cam = camera_from_sample(sample, fov_y=config.fov_y, resolution=resolution)
        out = render_mesh(mesh, cam)

        noisy = out.rgb
        if config.t_start > 0.0:
            noise = noise_rng.uniform(0.0, 1.0, out.rgb.shape)
            noisy = out.rgb * (1.0 - config.t_start) + noise * config.t_start

        try:
            refined = np.asarray(
                refiner.refine(noisy, config.t_start, sample, noise_rng), dtype=np.float64
            )
        except SplatforgeError:
            report = RefineReport(
                step=adam.t, loss=float("nan"), resolution=resolution,
                azimuth=sample.azimuth, elevation=sample.elevation, skipped=True,
            )
            return mesh, report, adam
        if refined.shape != out.rgb.shape:
            raise ContractViolationError(
                f"refiner output {refined.shape} does not match render {out.rgb.shape}"
            )

        diff = out.rgb - refined
        losses.append(float(np.mean(diff**2)))
        grad_rgb = (2.0 / diff.size) * diff
        texel_grad += mesh_backward(out, grad_rgb)

    texel_grad /= config.views_per_step
    loss = float(np.mean(losses))

    rgb = mesh.texture.rgb - adam.step(texel_grad, config.texel_lr)
    rgb = np.clip(rgb, 0.0, 1.0)
    pixels = mesh.texture.pixels.copy()
    pixels[:, :, :3] = rgb
    new_mesh = mesh.with_texture(ImageRGBA(pixels))

    report = RefineReport(
        step=adam.t, loss=loss, resolution=resolution,
        azimuth=sample.azimuth, elevation=sample.elevation,
    )
    return new_mesh, report, adam


def run_refine(mesh, refiner, config, progress=None):
    """Full stage-2 loop; returns (mesh, reports)."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x2F]))
    noise_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x2F0E]))
    adam = None
    reports = []
    for _ in range(config.steps_stage2):
        mesh, report, adam = refine_step(mesh, refiner, config, rng, adam, noise_rng)
        reports.append(report)
        if progress:
            progress(report)
    return mesh, reports
