import numpy as np
import pytest

from splatforge.types import GaussianCloud


def make_random_cloud(rng, n, *, center_box=0.5, scale_range=(0.03, 0.15),
                      opacity_range=(0.15, 0.75)):
    """Well-behaved random cloud for rasterizer and density tests.

    Opacities stay away from 0/1 and scales from degeneracy, which keeps the
    forward model smooth where finite differences probe it.
    """
    centers = rng.uniform(-center_box, center_box, (n, 3))
    log_scales = np.log(rng.uniform(*scale_range, (n, 3)))
    quats = rng.standard_normal((n, 4))
    p = rng.uniform(*opacity_range, n)
    logits = np.log(p / (1 - p))
    colors = rng.uniform(0.05, 0.95, (n, 3))
    return GaussianCloud(centers, log_scales, quats, logits, colors)


def empty_cloud():
    return GaussianCloud(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
