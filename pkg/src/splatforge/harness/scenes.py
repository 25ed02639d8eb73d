"""Procedural ground-truth scenes: colored primitives built from Gaussians.

These stand in for diffusion-generated imagery: every pipeline stage
still runs, but novel-view supervision becomes checkable against renders of
a known cloud.
"""

from dataclasses import dataclass

import numpy as np

from ..types import GaussianCloud
from ..errors import InvalidParameterError


@dataclass(frozen=True)
class SyntheticScene:
    """Ground-truth cloud plus the identifiers that make runs reproducible."""

    cloud: GaussianCloud
    scene_id: str
    seed: int


def _cloud_from_points(points, colors, scale, opacity, rng):
    n = len(points)
    quats = rng.standard_normal((n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacity_logit = float(np.log(opacity) - np.log1p(-opacity))
    return GaussianCloud(
        centers=points,
        log_scales=np.full((n, 3), np.log(scale)),
        rotations=quats,
        opacity_logits=np.full(n, opacity_logit),
        colors=np.clip(colors, 0.0, 1.0),
    )


def _sphere_scene(seed, n=240):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C]))
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    points = 0.45 * d
    colors = 0.5 + 0.5 * d  # smooth directional gradient
    spacing = 0.45 * np.sqrt(4.0 * np.pi / n)
    return _cloud_from_points(points, colors, 0.9 * spacing, 0.9, rng)


def _box_scene(seed, n_per_face=36):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB0]))
    face_colors = np.array(
        [
            [0.9, 0.2, 0.2],
            [0.2, 0.9, 0.2],
            [0.2, 0.2, 0.9],
            [0.9, 0.9, 0.2],
            [0.9, 0.2, 0.9],
            [0.2, 0.9, 0.9],
        ]
    )
    half = 0.35
    points, colors = [], []
    for face in range(6):
        axis, sign = divmod(face, 2)
        uv = rng.uniform(-half, half, (n_per_face, 2))
        pts = np.empty((n_per_face, 3))
        pts[:, axis] = half if sign == 0 else -half
        others = [a for a in range(3) if a != axis]
        pts[:, others[0]] = uv[:, 0]
        pts[:, others[1]] = uv[:, 1]
        points.append(pts)
        colors.append(np.tile(face_colors[face], (n_per_face, 1)))
    spacing = 2 * half / np.sqrt(n_per_face)
    return _cloud_from_points(
        np.concatenate(points), np.concatenate(colors), 0.8 * spacing, 0.9, rng
    )


def _two_blob_scene(seed, n_per_blob=120):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x2B]))
    specs = [
        (np.array([-0.28, 0.0, 0.0]), 0.20, np.array([0.85, 0.15, 0.15])),
        (np.array([0.28, 0.08, 0.0]), 0.16, np.array([0.15, 0.25, 0.85])),
    ]
    points, colors = [], []
    for center, radius, base in specs:
        d = rng.standard_normal((n_per_blob, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = radius * rng.uniform(0.0, 1.0, n_per_blob) ** (1.0 / 3.0)
        pts = center + d * r[:, None]
        tint = 1.0 + 0.15 * (pts[:, 1:2] - center[1]) / radius
        points.append(pts)
        colors.append(np.clip(base * tint, 0.0, 1.0))
    spacing = 0.20 / np.cbrt(n_per_blob)
    return _cloud_from_points(
        np.concatenate(points), np.concatenate(colors), 2.2 * spacing, 0.85, rng
    )


_BUILDERS = {
    "sphere": _sphere_scene,
    "box": _box_scene,
    "two_blob": _two_blob_scene,
}


def scene_ids():
    return tuple(sorted(_BUILDERS))


def build_scene(scene_id, seed=0):
    """Construct a named synthetic scene; deterministic given (id, seed)."""
    if scene_id not in _BUILDERS:
        raise InvalidParameterError(f"unknown scene {scene_id!r}; have {scene_ids()}")
    return SyntheticScene(cloud=_BUILDERS[scene_id](seed), scene_id=scene_id, seed=seed)
