"""Scene value objects: Gaussians, clouds, cameras, and RGBA images.

Parameterization: scales live in log space and opacity in logit space so
unconstrained gradient steps keep scales positive and opacity inside [0, 1].
All value objects are immutable once built; optimization produces new clouds.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .geometry import normalize_quaternion

SCENE_BOX = 1.0  # nominal scene is the (-1, 1)^3 box


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return float(_sigmoid(x.reshape(1))[0])
    return _sigmoid(x)


def logit(p):
    """Inverse of sigmoid; p must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0) or np.any(p >= 1):
        raise InvalidParameterError("logit argument must be in (0, 1)")
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Gaussian3D:
    """One anisotropic 3D Gaussian primitive, stored in optimization space.

    center is in world units; log_scale exponentiates to strictly positive
    per-axis extents; rot is an unnormalized quaternion normalized on read;
    opacity_logit squashes to [0, 1]; color is plain RGB in [0, 1].
    """

    center: np.ndarray
    log_scale: np.ndarray
    rot: np.ndarray
    opacity_logit: float
    color: np.ndarray

    def __post_init__(self):
        for name in ("center", "log_scale", "rot", "color"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError(f"non-finite {name}: {arr}")
        if self.center.shape != (3,) or self.log_scale.shape != (3,):
            raise InvalidParameterError("center and log_scale must be 3-vectors")
        if self.rot.shape != (4,):
            raise InvalidParameterError("rot must be a 4-vector quaternion")
        if self.color.shape != (3,):
            raise InvalidParameterError("color must be a 3-vector")
        if np.any(self.color < 0) or np.any(self.color > 1):
            raise InvalidParameterError(f"color out of [0,1]: {self.color}")
        if not np.isfinite(self.opacity_logit):
            raise InvalidParameterError("non-finite opacity logit")
        if np.linalg.norm(self.rot) == 0:
            raise InvalidParameterError("zero-norm quaternion")

    @property
    def scale(self):
        return np.exp(self.log_scale)

    @property
    def rotation(self):
        return normalize_quaternion(self.rot)

    @property
    def opacity(self):
        return sigmoid(self.opacity_logit)

    @classmethod
    def from_physical(cls, center, scale, rotation, opacity, color):
        """Build from physical-space values (positive scale, opacity in (0,1))."""
        scale = np.asarray(scale, dtype=np.float64)
        if np.any(scale <= 0):
            raise InvalidParameterError(f"scale must be positive, got {scale}")
        return cls(
            center=np.asarray(center, dtype=np.float64),
            log_scale=np.log(scale),
            rot=normalize_quaternion(rotation),
            opacity_logit=logit(float(opacity)),
            color=np.asarray(color, dtype=np.float64),
        )


class GaussianCloud:
    """Ordered collection of Gaussians held as float32 parameter arrays.

    The struct-of-arrays layout is what the rasterizer, optimizer, and
    checkpoint writer consume; Gaussian3D views are materialized on demand.
    """

    __slots__ = ("centers", "log_scales", "rotations", "opacity_logits", "colors", "generation")

    def __init__(self, centers, log_scales, rotations, opacity_logits, colors, generation=0):
        self.centers = np.ascontiguousarray(centers, dtype=np.float32)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float32)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float32)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float32)
        self.colors = np.ascontiguousarray(colors, dtype=np.float32)
        self.generation = int(generation)
        n = len(self.centers)
        shapes = {
            "centers": (n, 3),
            "log_scales": (n, 3),
            "rotations": (n, 4),
            "opacity_logits": (n,),
            "colors": (n, 3),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise InvalidParameterError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError(f"non-finite values in {name}")
        if n and np.any(np.linalg.norm(self.rotations, axis=1) == 0):
            raise InvalidParameterError("zero-norm quaternion in cloud")
        for arr in (self.centers, self.log_scales, self.rotations, self.opacity_logits, self.colors):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.centers)

    def gaussian(self, i):
        """Materialize Gaussian i as a float64 value object."""
        return Gaussian3D(
            center=self.centers[i],
            log_scale=self.log_scales[i],
            rot=self.rotations[i],
            opacity_logit=float(self.opacity_logits[i]),
            color=np.clip(self.colors[i], 0.0, 1.0),
        )

    def __iter__(self):
        return (self.gaussian(i) for i in range(len(self)))

    @classmethod
    def from_gaussians(cls, gaussians, generation=0):
        gaussians = list(gaussians)
        return cls(
            centers=np.stack([g.center for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            colors=np.stack([g.color for g in gaussians]),
            generation=generation,
        )

    def replace(self, generation=None, **arrays):
        """Copy of the cloud with some parameter arrays swapped out."""
        kwargs = {
            name: arrays.get(name, getattr(self, name))
            for name in ("centers", "log_scales", "rotations", "opacity_logits", "colors")
        }
        gen = self.generation if generation is None else generation
        return GaussianCloud(generation=gen, **kwargs)

    # Physical-space reads (float64).
    @property
    def scales(self):
        return np.exp(self.log_scales.astype(np.float64))

    @property
    def quaternions(self):
        q = self.rotations.astype(np.float64)
        return q / np.linalg.norm(q, axis=1, keepdims=True)

    @property
    def opacities(self):
        return sigmoid(self.opacity_logits.astype(np.float64))

    @property
    def rgb(self):
        return np.clip(self.colors.astype(np.float64), 0.0, 1.0)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera looking at a fixed target (the scene origin)."""

    position: np.ndarray
    target: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_y: float = 49.1
    width: int = 512
    height: int = 512

    def __post_init__(self):
        for name in ("position", "target", "up"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (0.0 < self.fov_y < 180.0):
            raise InvalidParameterError(f"fov_y out of (0, 180): {self.fov_y}")
        if np.allclose(self.position, self.target):
            raise InvalidParameterError("camera position coincides with its target")
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError("non-positive resolution")

    def view_rotation(self):
        """World->view rotation, rows (right, down, forward); view z is depth."""
        forward = self.target - self.position
        forward = forward / np.linalg.norm(forward)
        side = np.cross(forward, self.up)
        n = np.linalg.norm(side)
        if n < 1e-12:
            raise InvalidParameterError("camera up vector is parallel to the view direction")
        side = side / n
        upv = np.cross(side, forward)
        return np.stack([side, -upv, forward])

    def intrinsics(self):
        """(fx, fy, cx, cy) with pixel centers at integer + 0.5."""
        fy = 0.5 * self.height / np.tan(np.radians(self.fov_y) / 2.0)
        return fy, fy, self.width / 2.0, self.height / 2.0

    def to_view(self, points):
        """Map (N, 3) world points into view space."""
        rot = self.view_rotation()
        return (np.asarray(points, dtype=np.float64) - self.position) @ rot.T


@dataclass(frozen=True)
class CameraSample:
    """Orbit pose relative to the reference camera (azimuth 0, elevation 0)."""

    azimuth: float
    elevation: float
    radius: float = 2.0

    def __post_init__(self):
        if not (-180.0 <= self.azimuth <= 180.0):
            raise InvalidParameterError(f"azimuth out of [-180, 180]: {self.azimuth}")
        if not (-90.0 < self.elevation < 90.0):
            raise InvalidParameterError(f"elevation out of (-90, 90): {self.elevation}")
        if self.radius <= 0:
            raise InvalidParameterError(f"radius must be positive: {self.radius}")


class ImageRGBA:
    """Float RGBA raster, row-major (height, width, 4), channels in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.ascontiguousarray(pixels, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise InvalidParameterError(f"expected (H, W, 4) pixels, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("non-finite pixel values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidParameterError("pixel channels must lie in [0, 1]")
        self.pixels = arr
        self.pixels.setflags(write=False)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def rgb(self):
        return self.pixels[:, :, :3]

    @property
    def alpha(self):
        return self.pixels[:, :, 3]

    @classmethod
    def from_rgb_alpha(cls, rgb, alpha):
        rgb = np.asarray(rgb, dtype=np.float64)
        alpha = np.asarray(alpha, dtype=np.float64)
        return cls(np.concatenate([rgb, alpha[..., None]], axis=2))

    @classmethod
    def solid(cls, height, width, rgba):
        return cls(np.broadcast_to(np.asarray(rgba, dtype=np.float64), (height, width, 4)).copy())
