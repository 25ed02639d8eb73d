"""Command-line interface.

Subcommands: generate (full two-stage pipeline), mesh (checkpoint ->
textured mesh), render (checkpoint -> pose PNGs), eval (checkpoint vs
synthetic scene), ablate (variant comparison table). SPLATFORGE_THREADS
caps worker threads for every command.
"""

import argparse
import json
import sys
from pathlib import Path

from . import report as reporting
from .backproject import color_backproject
from .cameras import camera_from_sample, turntable_views
from .config import load_config
from .density import local_density_query
from .errors import SplatforgeError
from .harness.ablation import VARIANTS, run_ablation, scene_reference_image
from .harness.eval import evaluate
from .harness.scenes import build_scene, scene_ids
from .marching import marching_cubes
from .objmesh import save_mesh
from .pipeline import make_guidance, make_refiner, run_generate
from .ply import load_checkpoint
from .png import load_png, save_rgb_png
from .raster import render
from .types import CameraSample
from .unwrap import uv_unwrap


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def _load_cfg(args, extra_overrides=None):
    overrides = dict(extra_overrides or {})
    cfg = load_config(path=args.config, overrides=overrides)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_generate(args):
    overrides = {}
    if args.plugin_guidance:
        overrides["plugins.guidance"] = args.plugin_guidance
    if args.plugin_refiner:
        overrides["plugins.refiner"] = args.plugin_refiner
    if args.preprocess:
        overrides["plugins.preprocess"] = args.preprocess
    if args.scene:
        overrides["plugins.scene"] = args.scene
    cfg = _load_cfg(args, overrides)

    scene = None
    if "oracle" in (cfg.plugins.guidance, cfg.plugins.refiner):
        scene = build_scene(cfg.plugins.scene, seed=cfg.seed)

    if args.input is not None:
        reference = load_png(args.input)
    elif scene is not None:
        reference = scene_reference_image(scene, fov_y=cfg.train.fov_y)
    else:
        raise SplatforgeError("generate needs an input image (or oracle plugins with a scene)")

    guidance = make_guidance(cfg, scene)
    refiner = make_refiner(cfg, scene)
    result = run_generate(cfg, reference, guidance, refiner, out_dir=args.out, scene=scene)
    print(f"generated {len(result.cloud)} gaussians, {result.mesh.n_triangles} triangles "
          f"in {result.runtime_seconds:.1f}s -> {args.out}")
    return 0


def cmd_mesh(args):
    cfg = _load_cfg(args)
    cloud = load_checkpoint(args.checkpoint)
    grid = local_density_query(cloud)
    mesh = marching_cubes(grid, cfg.mesh.density_threshold)
    if mesh.n_triangles == 0:
        raise SplatforgeError(
            f"no surface at density threshold {cfg.mesh.density_threshold} "
            f"(grid max {grid.values.max():.3g})"
        )
    mesh = uv_unwrap(mesh, texture_size=cfg.mesh.texture_size)
    mesh, coverage = color_backproject(
        mesh, cloud,
        texture_size=cfg.mesh.texture_size,
        view_resolution=cfg.mesh.view_resolution,
        cos_cutoff=cfg.mesh.normal_cos_cutoff,
        fov_y=cfg.train.fov_y,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    paths = save_mesh(mesh, args.out / "mesh.obj")
    (args.out / "coverage.json").write_text(json.dumps(coverage, indent=2))
    print(f"wrote {paths['obj']} ({mesh.n_triangles} triangles)")
    return 0


def _parse_pose(text):
    az, _, el = text.partition(":")
    return CameraSample(azimuth=float(az), elevation=float(el) if el else 0.0)


def cmd_render(args):
    cfg = _load_cfg(args)
    cloud = load_checkpoint(args.checkpoint)
    poses = [_parse_pose(p) for p in args.poses]
    if args.turntable:
        poses.extend(turntable_views(args.turntable))
    if not poses:
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(poses):
        cam = camera_from_sample(sample, fov_y=cfg.train.fov_y, resolution=args.resolution)
        out = render(cloud, cam)
        name = f"pose{i:03d}_az{sample.azimuth:+07.2f}_el{sample.elevation:+06.2f}.png"
        save_rgb_png(out.rgb, args.out / name, alpha=out.alpha)
    print(f"wrote {len(poses)} renders -> {args.out}")
    return 0


def cmd_eval(args):
    cfg = _load_cfg(args)
    scene = build_scene(args.scene, seed=cfg.seed)
    cloud = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if cloud is None:
        raise SplatforgeError("eval needs --checkpoint")
    rep = evaluate(scene, cloud=cloud, fov_y=cfg.train.fov_y, config_echo=cfg.echo())
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "eval_report.json").write_text(rep.to_json())
    reporting.write_table(
        rep.views,
        ("azimuth", "elevation", "psnr", "perceptual"),
        args.out / "eval_views.txt",
        args.out / "eval_views.tsv",
    )
    reporting.eval_views_figure(rep, args.out / "eval_views.png")
    print(f"mean held-out PSNR {rep.mean_psnr:.2f} dB, perceptual {rep.mean_perceptual:.4f}")
    return 0


def cmd_ablate(args):
    cfg = _load_cfg(args)
    scene = build_scene(args.scene, seed=cfg.seed)
    rows, _ = run_ablation(scene, args.variants, cfg, out_dir=args.out)
    print(reporting.write_table(rows, list(rows[0].keys())) if rows else "no rows")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="splatforge",
        description="Image-to-3D via differentiable Gaussian splatting: optimize, mesh, bake, refine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the full two-stage pipeline")
    p.add_argument("input", nargs="?", type=Path, default=None,
                   help="pre-masked RGBA input image (defaults to the oracle scene's front view)")
    _add_common(p)
    p.add_argument("--plugin-guidance", choices=("oracle", "none"), default=None)
    p.add_argument("--plugin-refiner", choices=("oracle", "identity"), default=None)
    p.add_argument("--preprocess", choices=("bicubic", "none"), default=None)
    p.add_argument("--scene", choices=scene_ids(), default=None,
                   help="synthetic scene backing the oracle plugins")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("mesh", help="extract a textured mesh from a checkpoint")
    p.add_argument("checkpoint", type=Path)
    _add_common(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("render", help="render checkpoint turntables / poses to PNG")
    p.add_argument("checkpoint", type=Path)
    _add_common(p)
    p.add_argument("--poses", nargs="*", default=[], metavar="AZ:EL",
                   help="explicit poses, e.g. 45:-10")
    p.add_argument("--turntable", type=int, default=0, help="add N evenly spaced azimuths")
    p.add_argument("--resolution", type=int, default=512)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score a checkpoint against a synthetic scene")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--scene", choices=scene_ids(), required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation table on a synthetic scene")
    p.add_argument("--scene", choices=scene_ids(), default="two_blob")
    p.add_argument("--variants", nargs="*", choices=VARIANTS, default=list(VARIANTS))
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SplatforgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
