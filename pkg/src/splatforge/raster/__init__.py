"""Differentiable splat and mesh rasterization."""

from .render import ParamGradients, RenderOutput, RenderTape, backward, render

__all__ = ["ParamGradients", "RenderOutput", "RenderTape", "backward", "render"]
