import numpy as np
import pytest

from splatforge.errors import ContractViolationError
from splatforge.metrics import (
    DISTANCE_GAIN,
    SCALES,
    WINDOW,
    StatsPerceptualMetric,
    default_perceptual_distance,
)


def reference_metric_distance(a, b, gain=DISTANCE_GAIN):
    """Straightforward reimplementation: explicit loops over scales/windows."""

    def features(img):
        feats = []
        for scale in SCALES:
            h = (img.shape[0] // scale) * scale
            w = (img.shape[1] // scale) * scale
            small = img[:h, :w].reshape(h // scale, scale, w // scale, scale, 3).mean(axis=(1, 3))
            wy = small.shape[0] // WINDOW
            wx = small.shape[1] // WINDOW
            means = np.empty((wy, wx, 3))
            stds = np.empty((wy, wx, 3))
            for yy in range(wy):
                for xx in range(wx):
                    block = small[yy * WINDOW : (yy + 1) * WINDOW, xx * WINDOW : (xx + 1) * WINDOW]
                    for c in range(3):
                        means[yy, xx, c] = block[:, :, c].mean()
                        stds[yy, xx, c] = np.sqrt(block[:, :, c].var() + 1e-8)
            weight = gain / np.sqrt(len(SCALES) * means.size)
            feats.append(means.ravel() * weight)
            feats.append(stds.ravel() * weight)
        return np.concatenate(feats)

    return float(np.linalg.norm(features(a) - features(b)))


@pytest.fixture
def metric():
    return StatsPerceptualMetric()


def structured_image(size=64):
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)
    return np.stack([yy, xx, 0.5 * (xx + yy)], axis=2)


def test_identical_images_have_zero_distance(metric, rng):
    img = rng.uniform(0, 1, (64, 64, 3))
    assert metric.distance(img, img) == 0.0


def test_distance_matches_embedding_norm(metric, rng):
    for _ in range(10):
        a = rng.uniform(0, 1, (48, 48, 3))
        b = rng.uniform(0, 1, (48, 48, 3))
        d = metric.distance(a, b)
        e = float(np.linalg.norm(metric.embed(a) - metric.embed(b)))
        assert abs(d - e) < 1e-6


def test_symmetry_on_random_pairs(metric, rng):
    for _ in range(100):
        a = rng.uniform(0, 1, (32, 32, 3))
        b = rng.uniform(0, 1, (32, 32, 3))
        assert metric.distance(a, b) == metric.distance(b, a)


def test_uniform_offset_matches_independent_reimplementation(metric, rng):
    img = structured_image()
    shifted = np.clip(img + 0.5, 0.0, 1.0)
    got = metric.distance(img, shifted)
    expected = reference_metric_distance(img, shifted)
    assert got > 0
    assert abs(got - expected) < 1e-6


def test_random_pairs_match_independent_reimplementation(metric, rng):
    for _ in range(3):
        a = rng.uniform(0, 1, (40, 56, 3))
        b = rng.uniform(0, 1, (40, 56, 3))
        assert abs(metric.distance(a, b) - reference_metric_distance(a, b)) < 1e-6


def test_range_bounds(metric):
    black = np.zeros((64, 64, 3))
    white = np.ones((64, 64, 3))
    d = metric.distance(black, white)
    assert abs(d - DISTANCE_GAIN) < 1e-12
    assert 0.0 <= d <= 2.0


def test_inverted_structured_image_clears_threshold(metric):
    img = structured_image()
    assert metric.distance(img, 1.0 - img) > 0.3


def test_minimum_resolution_contract(metric):
    small = np.zeros((16, 16, 3))
    with pytest.raises(ContractViolationError):
        metric.distance(small, small)
    with pytest.raises(ContractViolationError):
        default_perceptual_distance(np.zeros((64, 64, 3)), np.zeros((32, 32, 3)))


def test_embed_backward_matches_finite_differences(metric, rng):
    img = rng.uniform(0.1, 0.9, (40, 40, 3))
    direction = rng.standard_normal(metric.embed(img).shape)
    grad = metric.embed_backward(img, direction)
    h = 1e-6
    for _ in range(25):
        iy, ix, c = rng.integers(0, 40), rng.integers(0, 40), rng.integers(0, 3)
        plus = img.copy()
        plus[iy, ix, c] += h
        minus = img.copy()
        minus[iy, ix, c] -= h
        fd = (np.dot(metric.embed(plus), direction) - np.dot(metric.embed(minus), direction)) / (2 * h)
        assert abs(fd - grad[iy, ix, c]) <= max(1e-4 * abs(grad[iy, ix, c]), 1e-7)
