"""Ablation runner: rerun the pipeline with one component removed at a time.

Variants: full, no_sr_hook (pass-through preprocessor), no_qa_triplet
(triplet term disabled), no_refine (stage 2 skipped). All variants share one
seed so rows are directly comparable; a crash preserves the rows finished so
far before propagating.
"""

from dataclasses import replace
from pathlib import Path

from .. import report as reporting
from ..cameras import camera_from_sample, reference_view
from ..errors import ContractViolationError
from ..pipeline import run_generate
from ..raster import render
from ..types import ImageRGBA
from .oracles import OracleGuidance, OracleRefiner

VARIANTS = ("full", "no_sr_hook", "no_qa_triplet", "no_refine")

TABLE_HEADERS = (
    "variant",
    "mean_psnr",
    "mean_perceptual",
    "mean_mesh_psnr",
    "mean_mesh_perceptual",
    "runtime_seconds",
)


def variant_config(config, variant):
    """The config delta that realizes one ablation row."""
    if variant == "full":
        return config
    if variant == "no_sr_hook":
        return replace(config, plugins=replace(config.plugins, preprocess="none"))
    if variant == "no_qa_triplet":
        return replace(config, train=replace(config.train, enable_qa_triplet=False))
    if variant == "no_refine":
        return replace(config, refine=replace(config.refine, steps_stage2=0))
    raise ContractViolationError(f"unknown ablation variant {variant!r}; have {VARIANTS}")


def scene_reference_image(scene, resolution=256, fov_y=49.1):
    """Front-view ground-truth render packaged as the RGBA input image."""
    cam = camera_from_sample(reference_view(), fov_y=fov_y, resolution=resolution)
    out = render(scene.cloud, cam)
    return ImageRGBA.from_rgb_alpha(out.rgb.clip(0, 1), out.alpha.clip(0, 1))


def run_ablation(scene, variants, config, out_dir=None, progress=None):
    """Run each variant under the shared seed; returns (rows, eval_reports).

    Rows are dicts matching TABLE_HEADERS. If a variant crashes, the rows
    completed so far are written to out_dir (when given) and the error
    propagates.
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ContractViolationError(f"unknown variants {unknown}; have {VARIANTS}")

    reference = scene_reference_image(scene, fov_y=config.train.fov_y)
    rows, reports = [], {}
    try:
        for variant in variants:
            cfg = variant_config(config, variant)
            guidance = OracleGuidance(scene, fov_y=cfg.train.fov_y)
            refiner = OracleRefiner(scene, fov_y=cfg.train.fov_y)
            sub_dir = Path(out_dir) / variant if out_dir else None
            result = run_generate(
                cfg, reference, guidance, refiner, out_dir=sub_dir, scene=scene,
                progress=progress,
            )
            ev = result.eval_report
            rows.append(
                {
                    "variant": variant,
                    "mean_psnr": ev.mean_psnr,
                    "mean_perceptual": ev.mean_perceptual,
                    "mean_mesh_psnr": ev.mean_mesh_psnr,
                    "mean_mesh_perceptual": ev.mean_mesh_perceptual,
                    "runtime_seconds": result.runtime_seconds,
                }
            )
            reports[variant] = ev
    finally:
        if out_dir is not None and rows:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            reporting.write_table(
                rows, TABLE_HEADERS, out / "ablation.txt", out / "ablation.tsv"
            )
            reporting.ablation_figure(rows, out / "ablation.png")
    return rows, reports
