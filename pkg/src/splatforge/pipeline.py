"""End-to-end generation: preprocess, optimize, mesh, bake, refine, export.

Stages run strictly in order and each writes its artifacts before the next
begins, so a failure partway leaves everything already produced intact.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import report as reporting
from .backproject import color_backproject
from .cameras import camera_from_sample, turntable_views
from .config import dump_config
from .density import local_density_query
from .errors import SplatforgeError
from .marching import marching_cubes
from .metrics import StatsPerceptualMetric
from .objmesh import save_mesh
from .optimizer import train_stage1
from .ply import save_checkpoint
from .png import save_rgb_png
from .preprocess import make_preprocessor, prepare_reference
from .raster import render
from .refine import run_refine
from .unwrap import uv_unwrap


@dataclass
class PipelineResult:
    cloud: object
    mesh: object
    stage1_reports: list
    refine_reports: list
    eval_report: object = None
    coverage: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    paths: dict = field(default_factory=dict)


def run_generate(config, reference, guidance, refiner, out_dir=None, scene=None,
                 progress=None, turntable_resolution=256):
    """Run the two-stage pipeline; writes artifacts when out_dir is given.

    scene (a SyntheticScene) enables the held-out evaluation block.
    """
    t_start = time.time()
    out = None
    paths = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths["config"] = out / "config.ini"
        paths["config"].write_text(dump_config(config))

    preprocessor = make_preprocessor(config.plugins.preprocess)
    reference_big = prepare_reference(reference, preprocessor, config.plugins.sr_factor)

    metric = StatsPerceptualMetric()
    log_path = out / "stage1_log.jsonl" if out else None
    cloud, state, stage1_reports = train_stage1(
        config.train, guidance, metric, reference_big, log_path=log_path, progress=progress
    )
    if out:
        paths["checkpoint"] = out / "cloud.ply"
        save_checkpoint(cloud, paths["checkpoint"])
        paths["stage1_log"] = log_path
        paths["loss_curves"] = out / "loss_curves.png"
        reporting.training_curves_figure(stage1_reports, paths["loss_curves"])

    grid = local_density_query(cloud)
    mesh = marching_cubes(grid, config.mesh.density_threshold)
    if mesh.n_triangles == 0:
        raise SplatforgeError(
            f"no surface at density threshold {config.mesh.density_threshold}; "
            f"grid max density is {grid.values.max():.3g}"
        )
    mesh = uv_unwrap(mesh, texture_size=config.mesh.texture_size)
    mesh, coverage = color_backproject(
        mesh,
        cloud,
        texture_size=config.mesh.texture_size,
        view_resolution=config.mesh.view_resolution,
        cos_cutoff=config.mesh.normal_cos_cutoff,
        fov_y=config.train.fov_y,
    )

    refine_reports = []
    if refiner is not None and config.refine.steps_stage2 > 0:
        mesh, refine_reports = run_refine(mesh, refiner, config.refine)

    if out:
        paths["mesh"] = out / "mesh.obj"
        mesh_paths = save_mesh(mesh, paths["mesh"])
        paths.update({"mtl": mesh_paths["mtl"], "texture": mesh_paths["texture"]})
        if refine_reports:
            paths["refine_curve"] = out / "refine_curve.png"
            reporting.refine_curve_figure(refine_reports, paths["refine_curve"])

        snap_dir = out / "turntable"
        snap_dir.mkdir(exist_ok=True)
        for i, sample in enumerate(turntable_views()):
            cam = camera_from_sample(sample, fov_y=config.train.fov_y,
                                     resolution=turntable_resolution)
            shot = render(cloud, cam)
            save_rgb_png(shot.rgb, snap_dir / f"az{i:02d}.png", alpha=shot.alpha)
        paths["turntable"] = snap_dir

    eval_report = None
    if scene is not None:
        from .harness.eval import evaluate

        eval_report = evaluate(
            scene, cloud=cloud, mesh=mesh, fov_y=config.train.fov_y,
            config_echo=config.echo(), metric=metric,
        )
        if out:
            paths["eval"] = out / "eval_report.json"
            paths["eval"].write_text(eval_report.to_json())
            paths["eval_figure"] = out / "eval_views.png"
            reporting.eval_views_figure(eval_report, paths["eval_figure"])

    runtime = time.time() - t_start
    if out:
        paths["summary"] = out / "summary.json"
        summary = {
            "runtime_seconds": runtime,
            "n_gaussians": len(cloud),
            "n_triangles": mesh.n_triangles,
            "coverage": coverage,
            "config": config.echo(),
        }
        paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))

    return PipelineResult(
        cloud=cloud,
        mesh=mesh,
        stage1_reports=stage1_reports,
        refine_reports=refine_reports,
        eval_report=eval_report,
        coverage=coverage,
        runtime_seconds=runtime,
        paths=paths,
    )


def make_guidance(config, scene):
    """Resolve the guidance plugin named in the config."""
    from .harness.oracles import OracleGuidance

    kind = config.plugins.guidance
    if kind == "oracle":
        if scene is None:
            raise SplatforgeError("oracle guidance needs a synthetic scene")
        return OracleGuidance(scene, fov_y=config.train.fov_y)
    if kind == "none":
        return _NoGuidance()
    raise SplatforgeError(f"unknown guidance plugin {kind!r}")


def make_refiner(config, scene):
    """Resolve the refiner plugin named in the config."""
    from .harness.oracles import IdentityRefiner, OracleRefiner

    kind = config.plugins.refiner
    if kind == "oracle":
        if scene is None:
            raise SplatforgeError("oracle refiner needs a synthetic scene")
        return OracleRefiner(scene, fov_y=config.train.fov_y)
    if kind == "identity":
        return IdentityRefiner()
    raise SplatforgeError(f"unknown refiner plugin {kind!r}")


class _NoGuidance:
    """Always-unavailable guidance; steps proceed on the reference loss alone."""

    concurrency_safe = True

    def residual(self, render_rgb, sample, timestep):
        from .errors import GuidanceUnavailableError

        raise GuidanceUnavailableError("guidance plugin disabled (plugins.guidance = none)")
