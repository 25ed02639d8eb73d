"""Desk-scale verification rig: synthetic scenes, oracle plugins, evaluation."""

from .scenes import SyntheticScene, build_scene, scene_ids
from .oracles import OracleGuidance, OracleRefiner, brute_force_density
from .eval import EvalReport, evaluate, psnr

__all__ = [
    "EvalReport",
    "OracleGuidance",
    "OracleRefiner",
    "SyntheticScene",
    "brute_force_density",
    "build_scene",
    "evaluate",
    "psnr",
    "scene_ids",
]
