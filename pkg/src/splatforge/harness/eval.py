"""Held-out evaluation against ground-truth renders."""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from ..cameras import camera_from_sample, heldout_views
from ..errors import ContractViolationError
from ..metrics import StatsPerceptualMetric
from ..raster import render
from ..raster.mesh_render import render_mesh

MSE_FLOOR = 1e-10


def psnr(image_a, image_b):
    """10 log10(1 / mse) over the channels present; mse floored at 1e-10."""
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolationError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = max(float(np.mean((a - b) ** 2)), MSE_FLOOR)
    return 10.0 * np.log10(1.0 / mse)


@dataclass
class EvalReport:
    """Per-view and aggregate held-out metrics, with the config that made them."""

    scene_id: str
    seed: int
    views: list  # dicts: azimuth, elevation, psnr, perceptual[, mesh_*]
    mean_psnr: float
    mean_perceptual: float
    mean_mesh_psnr: float = float("nan")
    mean_mesh_perceptual: float = float("nan")
    runtime_seconds: float = 0.0
    config_echo: dict = field(default_factory=dict)

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def evaluate(scene, cloud=None, mesh=None, views=None, resolution=256,
             fov_y=49.1, config_echo=None, metric=None):
    """Score splat renders and/or mesh renders against ground truth.

    Held-out poses default to the eight offset orbit views; they are disjoint
    from every texturing azimuth by construction.
    """
    if cloud is None and mesh is None:
        raise ContractViolationError("evaluate needs a cloud, a mesh, or both")
    views = heldout_views() if views is None else views
    metric = metric or StatsPerceptualMetric()
    t0 = time.time()
    rows = []
    for sample in views:
        cam = camera_from_sample(sample, fov_y=fov_y, resolution=resolution)
        gt = render(scene.cloud, cam)
        row = {"azimuth": sample.azimuth, "elevation": sample.elevation}
        if cloud is not None:
            out = render(cloud, cam)
            row["psnr"] = psnr(out.rgb, gt.rgb)
            row["perceptual"] = metric.distance(out.rgb, gt.rgb)
        if mesh is not None:
            mout = render_mesh(mesh, cam)
            row["mesh_psnr"] = psnr(mout.rgb, gt.rgb)
            row["mesh_perceptual"] = metric.distance(mout.rgb, gt.rgb)
        rows.append(row)

    def _mean(key):
        vals = [r[key] for r in rows if key in r]
        return float(np.mean(vals)) if vals else float("nan")

    return EvalReport(
        scene_id=scene.scene_id,
        seed=scene.seed,
        views=rows,
        mean_psnr=_mean("psnr"),
        mean_perceptual=_mean("perceptual"),
        mean_mesh_psnr=_mean("mesh_psnr"),
        mean_mesh_perceptual=_mean("mesh_perceptual"),
        runtime_seconds=time.time() - t0,
        config_echo=config_echo or {},
    )
