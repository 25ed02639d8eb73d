"""Stage-1 training losses.

Three signals drive the cloud: a photometric + mask loss against the
reference view, an image-space guidance gradient from a pluggable view
prior, and a count-weighted triplet loss over perceptual embeddings of the
novel-view renders. The triplet weights scale with log2(1 + sample count) so
lopsided positive/negative splits still produce a usable signal.
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ContractViolationError, NoSamplesError


class GuidanceProvider(Protocol):
    """Novel-view prior seam.

    residual(render_rgb, sample, timestep) returns a per-pixel 3-channel
    residual (predicted noise minus injected noise, in image space) and a
    non-negative scalar weight for the timestep. Implementations raise
    GuidanceUnavailableError when they cannot serve a request.
    """

    def residual(self, render_rgb: np.ndarray, sample, timestep: int): ...


TIMESTEP_MAX = 1000
TIMESTEP_RANGE = (20, 980)  # uniform sampling window for training steps


def reference_loss(render, reference, w_rgb, w_a):
    """Mean-squared photometric and mask alignment with the reference image.

    loss = w_rgb * mean|rgb - ref_rgb|^2 + w_a * mean|alpha - ref_alpha|^2.
    Returns (loss, grad_rgb, grad_alpha), gradients exact for that expression.
    The per-pixel mean keeps weight schedules resolution-independent.
    """
    ref_rgb = reference.rgb
    ref_a = reference.alpha
    if render.rgb.shape != ref_rgb.shape:
        raise ContractViolationError(
            f"render {render.rgb.shape} vs reference {ref_rgb.shape}: resample the reference first"
        )
    d_rgb = render.rgb - ref_rgb
    d_a = render.alpha - ref_a
    n_rgb = d_rgb.size
    n_a = d_a.size
    loss = w_rgb * float(np.mean(d_rgb**2)) + w_a * float(np.mean(d_a**2))
    grad_rgb = (2.0 * w_rgb / n_rgb) * d_rgb
    grad_alpha = (2.0 * w_a / n_a) * d_a
    return loss, grad_rgb, grad_alpha


def sds_gradient(render, provider, sample, timestep):
    """Image-space gradient injected by the guidance provider.

    The provider's weighted residual feeds the rasterizer backward directly;
    nothing differentiates through the provider itself. Provider failures
    propagate (GuidanceUnavailableError) so the step can skip the term.
    """
    residual, weight = provider.residual(render.rgb, sample, timestep)
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != render.rgb.shape:
        raise ContractViolationError(
            f"guidance residual {residual.shape} does not match render {render.rgb.shape}"
        )
    if not np.isfinite(weight) or weight < 0:
        raise ContractViolationError(f"guidance weight must be finite and >= 0, got {weight}")
    return weight * residual


def quantity_weight(count):
    """log2(1 + count): soft emphasis that grows with sample count."""
    if count < 0:
        raise ContractViolationError(f"count must be >= 0, got {count}")
    return float(np.log2(1.0 + count))


@dataclass
class SampleSet:
    """Anchor embedding plus classified positive/negative embeddings.

    positive_indices/negative_indices record which candidate produced each
    embedding when the set came out of classify_samples.
    """

    anchor: np.ndarray
    positives: list
    negatives: list
    positive_indices: tuple = ()
    negative_indices: tuple = ()

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        self.positives = [np.asarray(p, dtype=np.float64) for p in self.positives]
        self.negatives = [np.asarray(n, dtype=np.float64) for n in self.negatives]
        for e in self.positives + self.negatives:
            if e.shape != self.anchor.shape:
                raise ContractViolationError("all embeddings must share the anchor's length")


def _mean_distance(anchor, group):
    if not group:
        return 0.0, []
    dists = [float(np.linalg.norm(anchor - e)) for e in group]
    return sum(dists) / len(dists), dists


def count_weighted_triplet_loss(samples, margin, with_sample_grads=False):
    """Hinge loss max(0, Q(Np) d(a,p) - Q(Nn) d(a,n) + margin).

    d(a, .) is the mean embedding distance over the group (0 when empty) and
    Q(n) = log2(1 + n). With no positives the hinge only pushes negatives
    away from the anchor; with no negatives it only pulls positives in.

    Returns (loss, grad_anchor) or, with with_sample_grads, a third element
    holding exact subgradients for every positive and negative embedding
    (the path training actually descends). Ties use the zero subgradient.
    """
    if margin < 0:
        raise ContractViolationError(f"margin must be >= 0, got {margin}")
    if not samples.positives and not samples.negatives:
        raise NoSamplesError("both positive and negative sets are empty")

    a = samples.anchor
    qp = quantity_weight(len(samples.positives))
    qn = quantity_weight(len(samples.negatives))
    d_pos, pos_dists = _mean_distance(a, samples.positives)
    d_neg, neg_dists = _mean_distance(a, samples.negatives)

    raw = qp * d_pos - qn * d_neg + margin
    loss = max(0.0, raw)

    grad_anchor = np.zeros_like(a)
    grad_pos = [np.zeros_like(a) for _ in samples.positives]
    grad_neg = [np.zeros_like(a) for _ in samples.negatives]
    if raw > 0.0:
        if samples.positives:
            coeff = qp / len(samples.positives)
            for e, d, g in zip(samples.positives, pos_dists, grad_pos):
                if d > 0.0:
                    unit = (a - e) / d
                    grad_anchor += coeff * unit
                    g -= coeff * unit
        if samples.negatives:
            coeff = qn / len(samples.negatives)
            for e, d, g in zip(samples.negatives, neg_dists, grad_neg):
                if d > 0.0:
                    unit = (a - e) / d
                    grad_anchor -= coeff * unit
                    g += coeff * unit

    if with_sample_grads:
        return loss, grad_anchor, (grad_pos, grad_neg)
    return loss, grad_anchor


def classify_samples(anchor_view, candidates, metric, threshold):
    """Split candidate renders into positives/negatives by guidance agreement.

    Each candidate is a (render_rgb, guidance_target_rgb) pair; a perceptual
    distance below the threshold marks the render positive. Embeddings of the
    renders (not the targets) populate the returned SampleSet.
    """
    if threshold <= 0:
        raise ContractViolationError(f"threshold must be > 0, got {threshold}")
    if not candidates:
        raise NoSamplesError("no candidate views to classify")
    anchor = metric.embed(anchor_view)
    positives, negatives = [], []
    pos_idx, neg_idx = [], []
    for i, (render_rgb, target_rgb) in enumerate(candidates):
        score = metric.distance(render_rgb, target_rgb)
        if score < threshold:
            positives.append(metric.embed(render_rgb))
            pos_idx.append(i)
        else:
            negatives.append(metric.embed(render_rgb))
            neg_idx.append(i)
    return SampleSet(
        anchor=anchor,
        positives=positives,
        negatives=negatives,
        positive_indices=tuple(pos_idx),
        negative_indices=tuple(neg_idx),
    )
