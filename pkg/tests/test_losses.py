import numpy as np
import pytest

from splatforge.cameras import camera_from_sample
from splatforge.errors import ContractViolationError, NoSamplesError
from splatforge.losses import (
    SampleSet,
    classify_samples,
    count_weighted_triplet_loss,
    quantity_weight,
    reference_loss,
    sds_gradient,
)
from splatforge.metrics import StatsPerceptualMetric
from splatforge.raster import render
from splatforge.types import CameraSample, ImageRGBA

from conftest import make_random_cloud


def render_for(rng, n=10, res=64):
    cloud = make_random_cloud(rng, n)
    cam = camera_from_sample(CameraSample(15.0, 5.0, 2.0), resolution=res)
    return render(cloud, cam)


def as_image(rgb, alpha):
    return ImageRGBA.from_rgb_alpha(np.clip(rgb, 0, 1), np.clip(alpha, 0, 1))


class TestReferenceLoss:
    def test_identity_gives_zero(self, rng):
        out = render_for(rng)
        ref = as_image(out.rgb, out.alpha)
        loss, g_rgb, g_a = reference_loss(out, ref, 10.0, 5.0)
        assert loss == 0.0
        assert not np.any(g_rgb) and not np.any(g_a)

    def test_constant_image_arithmetic(self, rng):
        out = render_for(rng, n=0)  # black render

        class _Half:
            rgb = np.full((64, 64, 3), 0.5)
            alpha = np.zeros((64, 64))

        ref = as_image(np.zeros((64, 64, 3)), np.zeros((64, 64)))
        loss, _, _ = reference_loss(_Half(), ref, 2.0, 0.0)
        assert abs(loss - 0.5) < 1e-12

    def test_matches_independent_mse_evaluation(self, rng):
        out = render_for(rng)
        ref_rgb = rng.uniform(0, 1, out.rgb.shape)
        ref_a = rng.uniform(0, 1, out.alpha.shape)
        ref = as_image(ref_rgb, ref_a)
        w_rgb, w_a = 3.0, 7.0
        loss, _, _ = reference_loss(out, ref, w_rgb, w_a)
        # independent evaluation, plain loops over the definition
        expected = w_rgb * np.mean((out.rgb - ref.rgb) ** 2) + w_a * np.mean(
            (out.alpha - ref.alpha) ** 2
        )
        assert abs(loss - expected) < 1e-7

    def test_gradient_matches_finite_differences(self, rng):
        rgb = rng.uniform(0, 1, (32, 32, 3))
        alpha = rng.uniform(0, 1, (32, 32))
        ref = as_image(rng.uniform(0, 1, (32, 32, 3)), rng.uniform(0, 1, (32, 32)))

        class _Out:
            pass

        out = _Out()
        out.rgb = rgb
        out.alpha = alpha
        loss, g_rgb, g_a = reference_loss(out, ref, 2.5, 1.5)
        h = 1e-6
        for _ in range(20):
            iy, ix, c = rng.integers(0, 32), rng.integers(0, 32), rng.integers(0, 3)
            out.rgb = rgb.copy()
            out.rgb[iy, ix, c] += h
            lp, _, _ = reference_loss(out, ref, 2.5, 1.5)
            out.rgb[iy, ix, c] -= 2 * h
            lm, _, _ = reference_loss(out, ref, 2.5, 1.5)
            fd = (lp - lm) / (2 * h)
            assert abs(fd - g_rgb[iy, ix, c]) <= max(1e-5 * abs(fd), 1e-9)
        out.rgb = rgb
        out.alpha = alpha.copy()
        out.alpha[3, 4] += h
        lp, _, _ = reference_loss(out, ref, 2.5, 1.5)
        out.alpha[3, 4] -= 2 * h
        lm, _, _ = reference_loss(out, ref, 2.5, 1.5)
        assert abs((lp - lm) / (2 * h) - g_a[3, 4]) < 1e-7

    def test_resolution_mismatch_raises(self, rng):
        out = render_for(rng)
        ref = as_image(np.zeros((32, 32, 3)), np.zeros((32, 32)))
        with pytest.raises(ContractViolationError):
            reference_loss(out, ref, 1.0, 1.0)


class _FixedGuidance:
    def __init__(self, residual, weight):
        self._residual = residual
        self._weight = weight

    def residual(self, render_rgb, sample, timestep):
        r = self._residual(render_rgb) if callable(self._residual) else self._residual
        return r, self._weight


class TestSdsGradient:
    def test_zero_residual_gives_zero_grad(self, rng):
        out = render_for(rng)
        provider = _FixedGuidance(np.zeros_like(out.rgb), 1.0)
        grad = sds_gradient(out, provider, CameraSample(0, 0, 2.0), 500)
        assert not np.any(grad)

    def test_oracle_difference_passes_through(self, rng):
        out = render_for(rng)
        target = rng.uniform(0, 1, out.rgb.shape)
        provider = _FixedGuidance(lambda rgb: rgb - target, 1.0)
        grad = sds_gradient(out, provider, CameraSample(0, 0, 2.0), 500)
        assert np.array_equal(grad, out.rgb - target)

    def test_weight_scales_residual(self, rng):
        out = render_for(rng)
        provider = _FixedGuidance(np.ones_like(out.rgb), 0.5)
        grad = sds_gradient(out, provider, CameraSample(0, 0, 2.0), 500)
        assert np.allclose(grad, 0.5)

    def test_mismatched_residual_raises(self, rng):
        out = render_for(rng)
        provider = _FixedGuidance(np.zeros((8, 8, 3)), 1.0)
        with pytest.raises(ContractViolationError):
            sds_gradient(out, provider, CameraSample(0, 0, 2.0), 500)


class TestQuantityWeight:
    def test_exact_values(self):
        assert quantity_weight(0) == 0.0
        assert quantity_weight(1) == 1.0
        assert quantity_weight(7) == 3.0

    def test_monotone_and_concave_over_integers(self):
        values = [quantity_weight(n) for n in range(1025)]
        diffs = np.diff(values)
        assert np.all(diffs > 0)
        assert np.all(np.diff(diffs) < 0)

    def test_negative_count_raises(self):
        with pytest.raises(ContractViolationError):
            quantity_weight(-1)


def embedding_at_distance(anchor, distance, direction=0):
    e = anchor.copy()
    e[direction] += distance
    return e


class TestTripletLoss:
    anchor = np.zeros(4)

    def test_absent_positive_branch(self):
        samples = SampleSet(self.anchor, [], [embedding_at_distance(self.anchor, 2.0)])
        loss, grad = count_weighted_triplet_loss(samples, 0.5)
        assert loss == 0.0
        assert not np.any(grad)

    def test_balanced_pair(self):
        samples = SampleSet(
            self.anchor,
            [embedding_at_distance(self.anchor, 1.0, 0)],
            [embedding_at_distance(self.anchor, 1.0, 1)],
        )
        loss, grad = count_weighted_triplet_loss(samples, 0.5)
        assert abs(loss - 0.5) < 1e-9
        assert np.any(grad)

    def test_three_positives_one_negative(self):
        positives = [embedding_at_distance(self.anchor, 0.2, d) for d in range(3)]
        negatives = [embedding_at_distance(self.anchor, 1.0, 3)]
        loss, _ = count_weighted_triplet_loss(SampleSet(self.anchor, positives, negatives), 0.3)
        assert loss == 0.0  # 2 * 0.2 - 1 * 1.0 + 0.3 < 0

    def test_absent_negative_branch_decreases_with_positive_distance(self):
        losses = []
        for d in (1.0, 0.6, 0.2):
            samples = SampleSet(self.anchor, [embedding_at_distance(self.anchor, d)], [])
            loss, grad = count_weighted_triplet_loss(samples, 0.1)
            losses.append(loss)
            assert loss == pytest.approx(1.0 * d + 0.1, abs=1e-9)
        assert losses[0] > losses[1] > losses[2]

    def test_both_empty_raises(self):
        with pytest.raises(NoSamplesError):
            count_weighted_triplet_loss(SampleSet(self.anchor, [], []), 0.1)

    def test_hinge_inactive_gives_zero_everywhere(self):
        samples = SampleSet(
            self.anchor,
            [embedding_at_distance(self.anchor, 0.1, 0)],
            [embedding_at_distance(self.anchor, 5.0, 1)],
        )
        loss, grad, (gp, gn) = count_weighted_triplet_loss(samples, 0.1, with_sample_grads=True)
        assert loss == 0.0
        assert not np.any(grad) and not np.any(gp[0]) and not np.any(gn[0])

    def test_nonnegativity_property(self, rng):
        for _ in range(200):
            anchor = rng.standard_normal(6)
            pos = [rng.standard_normal(6) for _ in range(rng.integers(0, 4))]
            neg = [rng.standard_normal(6) for _ in range(rng.integers(0, 4))]
            if not pos and not neg:
                continue
            loss, _ = count_weighted_triplet_loss(SampleSet(anchor, pos, neg), float(rng.uniform(0, 1)))
            assert loss >= 0.0

    def test_anchor_gradient_matches_finite_differences(self, rng):
        anchor = rng.standard_normal(5)
        pos = [rng.standard_normal(5) for _ in range(2)]
        neg = [rng.standard_normal(5) for _ in range(3)]
        margin = 5.0  # keep the hinge active
        loss, grad = count_weighted_triplet_loss(SampleSet(anchor, pos, neg), margin)
        assert loss > 0
        h = 1e-7
        for i in range(5):
            ap = anchor.copy()
            ap[i] += h
            am = anchor.copy()
            am[i] -= h
            lp, _ = count_weighted_triplet_loss(SampleSet(ap, pos, neg), margin)
            lm, _ = count_weighted_triplet_loss(SampleSet(am, pos, neg), margin)
            assert abs((lp - lm) / (2 * h) - grad[i]) < 1e-5

    def test_tie_uses_zero_subgradient(self):
        # positive exactly at the anchor: distance 0, gradient contribution 0
        samples = SampleSet(self.anchor, [self.anchor.copy()], [])
        loss, grad = count_weighted_triplet_loss(samples, 0.3)
        assert loss == pytest.approx(0.3)
        assert not np.any(grad)


class TestClassifySamples:
    metric = StatsPerceptualMetric()

    def structured(self, rng):
        yy, xx = np.mgrid[0:64, 0:64] / 63.0
        base = np.stack([yy, xx, 0.5 * (xx + yy)], axis=2)
        return np.clip(base + 0.05 * rng.standard_normal(base.shape), 0, 1)

    def test_identical_candidate_is_positive(self, rng):
        img = self.structured(rng)
        samples = classify_samples(img, [(img, img.copy())], self.metric, 0.3)
        assert len(samples.positives) == 1 and len(samples.negatives) == 0

    def test_inverted_candidate_is_negative(self, rng):
        img = self.structured(rng)
        samples = classify_samples(img, [(img, 1.0 - img)], self.metric, 0.3)
        assert len(samples.negatives) == 1
        assert self.metric.distance(img, 1.0 - img) > 0.3

    def test_mixed_pair_partitions(self, rng):
        img = self.structured(rng)
        candidates = [(img, img.copy()), (img, 1.0 - img)]
        samples = classify_samples(img, candidates, self.metric, 0.3)
        assert len(samples.positives) == 1 and len(samples.negatives) == 1
        assert samples.positive_indices == (0,) and samples.negative_indices == (1,)

    def test_threshold_monotonicity(self, rng):
        img = self.structured(rng)
        others = [np.clip(img + s, 0, 1) for s in (0.02, 0.1, 0.3, 0.6)]
        candidates = [(o, img) for o in others]
        previous_positive = set()
        for threshold in (0.05, 0.15, 0.4, 0.9, 1.6):
            samples = classify_samples(img, candidates, self.metric, threshold)
            current = set(samples.positive_indices)
            assert previous_positive <= current
            previous_positive = current

    def test_empty_candidates_raise(self, rng):
        with pytest.raises(NoSamplesError):
            classify_samples(self.structured(rng), [], self.metric, 0.3)
