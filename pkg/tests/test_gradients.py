"""Finite-difference verification of the rasterizer backward pass."""

import numpy as np

from splatforge.cameras import camera_from_sample
from splatforge.raster import backward, render
from splatforge.types import CameraSample, Gaussian3D, GaussianCloud

from conftest import make_random_cloud

PARAM_NAMES = ("centers", "log_scales", "rotations", "opacity_logits", "colors")


def loss_value(cloud, cam, grad_rgb, grad_alpha):
    out = render(cloud, cam)
    return float(np.sum(out.rgb * grad_rgb) + np.sum(out.alpha * grad_alpha))


def finite_difference_grads(cloud, cam, grad_rgb, grad_alpha, name, h=1e-4):
    """Central differences through the float32 parameter storage.

    The effective step is measured from the actually-stored float32 values,
    which removes parameter-quantization error from the estimate.
    """
    arr = getattr(cloud, name)
    out = np.zeros(arr.shape)
    for ix in np.ndindex(arr.shape):
        plus = arr.copy()
        plus.setflags(write=True)
        plus[ix] = arr[ix] + h
        minus = arr.copy()
        minus.setflags(write=True)
        minus[ix] = arr[ix] - h
        span = float(plus[ix]) - float(minus[ix])
        f_plus = loss_value(cloud.replace(**{name: plus}), cam, grad_rgb, grad_alpha)
        f_minus = loss_value(cloud.replace(**{name: minus}), cam, grad_rgb, grad_alpha)
        out[ix] = (f_plus - f_minus) / span
    return out


def check_cloud_gradients(cloud, cam, rng, rel_tol=1e-3, abs_floor=1e-6):
    grad_rgb = rng.standard_normal((cam.height, cam.width, 3))
    grad_alpha = rng.standard_normal((cam.height, cam.width))
    out = render(cloud, cam)
    grads = backward(out, grad_rgb, grad_alpha)
    worst = 0.0
    for name in PARAM_NAMES:
        analytic = getattr(grads, name)
        fd = finite_difference_grads(cloud, cam, grad_rgb, grad_alpha, name)
        err = np.abs(fd - analytic)
        tol = np.maximum(rel_tol * np.abs(analytic), abs_floor)
        assert np.all(err <= tol), (
            f"{name}: max violation {np.max(err / tol):.3g}x at "
            f"{np.unravel_index(np.argmax(err / tol), err.shape)}"
        )
        worst = max(worst, float(np.max(err / tol)))
    return worst


def test_zero_upstream_gradient_gives_zero_grads(rng):
    cloud = make_random_cloud(rng, 6)
    cam = camera_from_sample(CameraSample(10.0, 5.0, 2.0), resolution=64)
    out = render(cloud, cam)
    grads = backward(out, np.zeros((64, 64, 3)), np.zeros((64, 64)))
    for name in PARAM_NAMES:
        assert not np.any(getattr(grads, name))


def test_color_gradient_equals_accumulated_blend_weight():
    # single splat: dL/d(color_c) with grad on channel c only is sum_p w T
    g = Gaussian3D.from_physical((0, 0, 0), (0.12,) * 3, (1, 0, 0, 0), 0.6, (0.3, 0.6, 0.9))
    cloud = GaussianCloud.from_gaussians([g])
    cam = camera_from_sample(CameraSample(0, 0, 2.0), resolution=64)
    out = render(cloud, cam)
    # for one splat, per-pixel blend weight w*T == alpha channel of the render
    expected = out.alpha.sum()
    grad_rgb = np.zeros((64, 64, 3))
    grad_rgb[:, :, 1] = 1.0
    grads = backward(out, grad_rgb, np.zeros((64, 64)))
    assert abs(grads.colors[0, 1] - expected) < 1e-9 * max(1.0, expected)
    assert grads.colors[0, 0] == 0.0 and grads.colors[0, 2] == 0.0


def test_gradients_vanish_for_offscreen_splats(rng):
    # anisotropic so even the rotation picks up gradient
    g_on = Gaussian3D.from_physical((0, 0, 0), (0.1, 0.05, 0.15), (1, 0, 0, 0), 0.5, (1, 0, 0))
    g_off = Gaussian3D.from_physical((0, 0, 5.0), (0.1,) * 3, (1, 0, 0, 0), 0.5, (0, 1, 0))
    cloud = GaussianCloud.from_gaussians([g_on, g_off])
    cam = camera_from_sample(CameraSample(0, 0, 2.0), resolution=64)
    out = render(cloud, cam)
    grads = backward(out, np.ones((64, 64, 3)), np.ones((64, 64)))
    for name in PARAM_NAMES:
        assert not np.any(getattr(grads, name)[1])
        assert np.any(getattr(grads, name)[0])


def test_full_gradient_check_small_cloud():
    rng = np.random.default_rng(2024)
    cloud = make_random_cloud(rng, 8)
    cam = camera_from_sample(CameraSample(33.0, 12.0, 2.0), resolution=64)
    check_cloud_gradients(cloud, cam, rng)


def test_gradient_check_with_anisotropic_overlaps():
    rng = np.random.default_rng(99)
    cloud = make_random_cloud(rng, 10, center_box=0.25, scale_range=(0.02, 0.2))
    cam = camera_from_sample(CameraSample(-60.0, -20.0, 2.0), resolution=64)
    check_cloud_gradients(cloud, cam, rng)
