"""Stage-1 training loop: initialization, schedules, gradient assembly,
adaptive updates, and periodic densify/prune maintenance.

Per step the loop renders the reference view plus a small batch of novel
views at the scheduled resolution, assembles image-space gradients from the
reference loss, the guidance residual, and the triplet loss over classified
novel views, then backpropagates once per render and applies one adaptive
moment update per parameter group.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .cameras import camera_from_sample, reference_view, sample_training_camera
from .errors import GuidanceUnavailableError, NoSamplesError
from .images import downsample_image
from .raster import ParamGradients, backward, render
from .types import GaussianCloud

PARAM_GROUPS = ("centers", "log_scales", "rotations", "opacity_logits", "colors")

# projection guards applied after each update; loose, but they keep the
# compositing backward well-conditioned (opacity away from exactly 1)
LOG_SCALE_RANGE = (np.log(1e-5), np.log(2.0))
OPACITY_LOGIT_RANGE = (-9.2, 5.3)


@dataclass
class TrainConfig:
    """Stage-1 constants and their standard defaults."""

    num_particles: int = 5000
    init_opacity: float = 0.1
    init_radius: float = 0.5
    steps_stage1: int = 500
    densify_interval: int = 100
    resolution_start: int = 64
    resolution_end: int = 512
    w_rgb_end: float = 1e4
    w_a_end: float = 1e3
    lpips_threshold: float = 0.3
    batch_novel_views: int = 2
    margin_start: float = 0.1
    margin_end: float = 0.5
    qa_weight: float = 1.0
    enable_qa_triplet: bool = True
    camera_radius: float = 2.0
    fov_y: float = 49.1
    azimuth_range: tuple = (-180.0, 180.0)
    elevation_range: tuple = (-30.0, 30.0)
    lr_centers: float = 1.6e-4
    lr_centers_final: float = 1.6e-6
    lr_colors: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_scales: float = 5e-3
    lr_rotations: float = 1e-3
    # Calibrated to the ramped reference-loss weights (w_rgb -> 1e4), which
    # scale image-space gradients ~1e4x above reconstruction practice; picks
    # roughly the top decile of accumulated view-space gradients per event.
    densify_grad_threshold: float = 3.0
    split_scale_threshold: float = 0.04  # 2% of the 2-unit scene box
    # footprint truncation during training; biases each pixel by at most
    # ~(contributors x floor) ~ 1e-4 while halving compositing work
    raster_weight_floor: float = 1e-6
    prune_opacity_threshold: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.num_particles < 1 or self.steps_stage1 < 1 or self.densify_interval < 1:
            raise ValueError("counts must be positive")
        if self.batch_novel_views < 1:
            raise ValueError("batch_novel_views must be positive")
        if self.resolution_end < self.resolution_start:
            raise ValueError("resolution schedule must be non-decreasing")
        if self.w_rgb_end < 0 or self.w_a_end < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class StepReport:
    """One structured record per training step."""

    step: int
    loss_ref: float
    raw_ref_mse: float
    sds_magnitude: float
    loss_triplet: float
    n_pos: int
    n_neg: int
    margin: float
    resolution: int
    w_rgb: float
    w_a: float
    n_gaussians: int
    sds_skipped: bool = False
    triplet_skipped: bool = False
    densify_event: dict = field(default_factory=dict)

    @property
    def loss_total(self):
        return self.loss_ref + self.sds_magnitude + self.loss_triplet

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["loss_total"] = self.loss_total
        return d


class OptState:
    """Mutable optimizer state: moments, counters, rng, densify statistics."""

    def __init__(self, cloud, config):
        n = len(cloud)
        self.step = 0
        self.adam_t = 0
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5F0]))
        self.moments = {
            name: (np.zeros_like(getattr(cloud, name), dtype=np.float64),
                   np.zeros_like(getattr(cloud, name), dtype=np.float64))
            for name in PARAM_GROUPS
        }
        self.grad_norm_acc = np.zeros(n)
        self.grad_count = np.zeros(n)
        self.margin = config.margin_start
        self.resolution = config.resolution_start
        self._reference_cache = {}

    def moments_match(self, cloud):
        return all(self.moments[g][0].shape == getattr(cloud, g).shape for g in PARAM_GROUPS)


def schedule(step, config):
    """Linear schedules: loss weights, render resolution, triplet margin."""
    if not (0 <= step <= config.steps_stage1):
        raise ValueError(f"step {step} outside [0, {config.steps_stage1}]")
    frac = step / config.steps_stage1
    w_rgb = config.w_rgb_end * frac
    w_a = config.w_a_end * frac
    res = config.resolution_start + (config.resolution_end - config.resolution_start) * frac
    resolution = int(round(res / 8.0) * 8)  # multiple of 8 keeps tiles aligned
    margin = config.margin_start + (config.margin_end - config.margin_start) * frac
    return w_rgb, w_a, resolution, margin


def _mean_nearest_neighbor_distance(points):
    n = len(points)
    if n < 2:
        return 0.1
    best = np.full(n, np.inf)
    block = 512
    for i in range(0, n, block):
        stop = min(i + block, n)
        d2 = np.sum((points[i:stop, None, :] - points[None, :, :]) ** 2, axis=2)
        d2[np.arange(stop - i), np.arange(i, stop)] = np.inf
        best[i:stop] = d2.min(axis=1)
    return float(np.sqrt(best).mean())


def init_cloud(config):
    """Fresh cloud: grey, faint, uniform in a ball, splats sized to overlap."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x1A17]))
    n = config.num_particles
    direction = rng.standard_normal((n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = config.init_radius * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    centers = direction * radii[:, None]

    quats = rng.standard_normal((n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)

    scale = max(_mean_nearest_neighbor_distance(centers), 1e-4)
    log_scales = np.full((n, 3), np.log(scale))
    opacity_logit = float(np.log(config.init_opacity) - np.log1p(-config.init_opacity))
    return GaussianCloud(
        centers=centers,
        log_scales=log_scales,
        rotations=quats,
        opacity_logits=np.full(n, opacity_logit),
        colors=np.full((n, 3), 0.5),
    )


def _adam_update(cloud, state, grads, config):
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    state.adam_t += 1
    t = state.adam_t
    frac = min(state.step / config.steps_stage1, 1.0)
    cosine = 0.5 * (1.0 + np.cos(np.pi * frac))
    lrs = {
        "centers": config.lr_centers_final + (config.lr_centers - config.lr_centers_final) * cosine,
        "log_scales": config.lr_scales,
        "rotations": config.lr_rotations,
        "opacity_logits": config.lr_opacity,
        "colors": config.lr_colors,
    }
    new_arrays = {}
    for name in PARAM_GROUPS:
        g = getattr(grads, name)
        m, v = state.moments[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        param = getattr(cloud, name).astype(np.float64)
        param -= lrs[name] * m_hat / (np.sqrt(v_hat) + eps)
        new_arrays[name] = param

    new_arrays["colors"] = np.clip(new_arrays["colors"], 0.0, 1.0)
    new_arrays["log_scales"] = np.clip(new_arrays["log_scales"], *LOG_SCALE_RANGE)
    new_arrays["opacity_logits"] = np.clip(new_arrays["opacity_logits"], *OPACITY_LOGIT_RANGE)
    norms = np.linalg.norm(new_arrays["rotations"], axis=1, keepdims=True)
    new_arrays["rotations"] = new_arrays["rotations"] / norms
    return cloud.replace(generation=cloud.generation + 1, **new_arrays)


def _reference_at(state, reference, resolution):
    cached = state._reference_cache.get(resolution)
    if cached is None:
        cached = downsample_image(reference, resolution, resolution)
        state._reference_cache[resolution] = cached
    return cached


def training_step(cloud, state, config, guidance, metric, reference):
    """One optimization step; returns (cloud, state, StepReport).

    Guidance failures drop the guidance term for the step; an empty
    classification drops the triplet term. Both are flagged on the report.
    """
    if state.step >= config.steps_stage1:
        raise ValueError(f"stage 1 is limited to {config.steps_stage1} steps")
    w_rgb, w_a, resolution, margin = schedule(state.step, config)
    state.margin = margin
    state.resolution = resolution

    ref_image = _reference_at(state, reference, resolution)
    ref_cam = camera_from_sample(
        reference_view(config.camera_radius), fov_y=config.fov_y, resolution=resolution
    )
    ref_out = render(cloud, ref_cam, weight_floor=config.raster_weight_floor)
    loss_ref, grad_rgb_ref, grad_alpha_ref = losses.reference_loss(ref_out, ref_image, w_rgb, w_a)
    raw_mse = float(np.mean((ref_out.rgb - ref_image.rgb) ** 2))

    novel = []
    sds_skipped = False
    sds_magnitude = 0.0
    for _ in range(config.batch_novel_views):
        sample = sample_training_camera(state.rng, radius=config.camera_radius)
        timestep = int(state.rng.integers(losses.TIMESTEP_RANGE[0], losses.TIMESTEP_RANGE[1] + 1))
        cam = camera_from_sample(sample, fov_y=config.fov_y, resolution=resolution)
        out = render(cloud, cam, weight_floor=config.raster_weight_floor)
        grad = np.zeros_like(out.rgb)
        target = None
        try:
            residual, weight = guidance.residual(out.rgb, sample, timestep)
            residual = np.asarray(residual, dtype=np.float64)
            grad = weight * residual
            target = np.clip(out.rgb - residual, 0.0, 1.0)
            sds_magnitude += weight * float(np.mean(residual**2))
        except GuidanceUnavailableError:
            sds_skipped = True
        novel.append({"out": out, "grad": grad, "target": target})

    loss_triplet = 0.0
    n_pos = n_neg = 0
    triplet_skipped = False
    if config.enable_qa_triplet and config.qa_weight != 0.0:
        candidates = [(item["out"].rgb, item["target"]) for item in novel if item["target"] is not None]
        try:
            if not candidates:
                raise NoSamplesError("no guidance targets this step")
            sample_set = losses.classify_samples(
                ref_image.rgb, candidates, metric, config.lpips_threshold
            )
            n_pos = len(sample_set.positives)
            n_neg = len(sample_set.negatives)
            loss_triplet, _, (grad_pos, grad_neg) = losses.count_weighted_triplet_loss(
                sample_set, margin, with_sample_grads=True
            )
            kept = [item for item in novel if item["target"] is not None]
            for emb_grad, cand_idx in zip(grad_pos, sample_set.positive_indices):
                if np.any(emb_grad):
                    img_grad = metric.embed_backward(kept[cand_idx]["out"].rgb, emb_grad)
                    kept[cand_idx]["grad"] = kept[cand_idx]["grad"] + config.qa_weight * img_grad
            for emb_grad, cand_idx in zip(grad_neg, sample_set.negative_indices):
                if np.any(emb_grad):
                    img_grad = metric.embed_backward(kept[cand_idx]["out"].rgb, emb_grad)
                    kept[cand_idx]["grad"] = kept[cand_idx]["grad"] + config.qa_weight * img_grad
            loss_triplet *= config.qa_weight
        except NoSamplesError:
            triplet_skipped = True

    total = ParamGradients.zeros(len(cloud))
    total += backward(ref_out, grad_rgb_ref, grad_alpha_ref)
    zero_alpha = np.zeros((resolution, resolution))
    for item in novel:
        if np.any(item["grad"]):
            total += backward(item["out"], item["grad"], zero_alpha)

    state.grad_norm_acc += total.view_grad_norm
    state.grad_count += (total.view_grad_norm > 0).astype(np.float64)

    new_cloud = _adam_update(cloud, state, total, config)
    state.step += 1

    report = StepReport(
        step=state.step,
        loss_ref=loss_ref,
        raw_ref_mse=raw_mse,
        sds_magnitude=sds_magnitude,
        loss_triplet=loss_triplet,
        n_pos=n_pos,
        n_neg=n_neg,
        margin=margin,
        resolution=resolution,
        w_rgb=w_rgb,
        w_a=w_a,
        n_gaussians=len(new_cloud),
        sds_skipped=sds_skipped,
        triplet_skipped=triplet_skipped,
    )

    if state.step % config.densify_interval == 0 and state.step < config.steps_stage1:
        new_cloud, event = densify_and_prune(new_cloud, state, config)
        report.densify_event = event
        report.n_gaussians = len(new_cloud)

    return new_cloud, state, report


def densify_and_prune(cloud, state, config):
    """Clone/split high-gradient Gaussians, prune near-transparent ones.

    Accumulated mean view-space positional gradient above the threshold
    selects candidates: small ones are cloned in place, oversized ones are
    replaced by two children offset +-0.5 sigma along their major axis with
    scales divided by 1.6. Moment accumulators are re-indexed to match; new
    rows start from zero moments.
    """
    n = len(cloud)
    mean_grad = state.grad_norm_acc / np.maximum(state.grad_count, 1.0)
    scales = cloud.scales
    max_scale = scales.max(axis=1)
    opacities = cloud.opacities

    hot = mean_grad > config.densify_grad_threshold
    prune = opacities < config.prune_opacity_threshold
    clone = hot & (max_scale < config.split_scale_threshold) & ~prune
    split = hot & (max_scale >= config.split_scale_threshold) & ~prune

    guard_triggered = False
    if np.all(prune):
        keep = np.argsort(opacities)[-16:]
        prune = np.ones(n, dtype=bool)
        prune[keep] = False
        clone[:] = False
        split[:] = False
        guard_triggered = True

    survivors = ~prune & ~split

    pieces = {name: [getattr(cloud, name)[survivors]] for name in PARAM_GROUPS}

    if np.any(clone):
        for name in PARAM_GROUPS:
            pieces[name].append(getattr(cloud, name)[clone])

    split_idx = np.flatnonzero(split)
    if len(split_idx):
        quats = cloud.quaternions[split_idx]
        axis_id = np.argmax(scales[split_idx], axis=1)
        rot = _rotation_matrices_at(quats)
        major_dir = rot[np.arange(len(split_idx)), :, axis_id]
        sigma = scales[split_idx][np.arange(len(split_idx)), axis_id]
        offset = 0.5 * sigma[:, None] * major_dir
        base_centers = cloud.centers[split_idx].astype(np.float64)
        child_scales = np.log(scales[split_idx] / 1.6)
        for sign in (+1.0, -1.0):
            pieces["centers"].append(base_centers + sign * offset)
            pieces["log_scales"].append(child_scales)
            pieces["rotations"].append(cloud.rotations[split_idx])
            pieces["opacity_logits"].append(cloud.opacity_logits[split_idx])
            pieces["colors"].append(cloud.colors[split_idx])

    arrays = {name: np.concatenate(parts, axis=0) for name, parts in pieces.items()}
    new_cloud = GaussianCloud(generation=cloud.generation + 1, **arrays)

    n_new = len(new_cloud)
    for name in PARAM_GROUPS:
        m, v = state.moments[name]
        kept_m = [m[survivors]]
        kept_v = [v[survivors]]
        extra = n_new - int(survivors.sum())
        if extra:
            shape = (extra,) + m.shape[1:]
            kept_m.append(np.zeros(shape))
            kept_v.append(np.zeros(shape))
        state.moments[name] = (np.concatenate(kept_m), np.concatenate(kept_v))
    state.grad_norm_acc = np.zeros(n_new)
    state.grad_count = np.zeros(n_new)

    event = {
        "cloned": int(clone.sum()),
        "split": int(split.sum()),
        "pruned": int(prune.sum()),
        "before": n,
        "after": n_new,
        "collapse_guard": guard_triggered,
    }
    return new_cloud, event


def _rotation_matrices_at(quats):
    from .raster.projection import _rotation_matrices

    return _rotation_matrices(np.asarray(quats, dtype=np.float64))


def train_stage1(config, guidance, metric, reference, cloud=None, log_path=None,
                 progress=None):
    """Run the full stage-1 loop; returns (cloud, state, reports)."""
    if cloud is None:
        cloud = init_cloud(config)
    state = OptState(cloud, config)
    reports = []
    log_file = open(log_path, "w") if log_path else None
    try:
        for _ in range(config.steps_stage1):
            cloud, state, report = training_step(cloud, state, config, guidance, metric, reference)
            reports.append(report)
            if log_file:
                log_file.write(json.dumps(report.as_dict()) + "\n")
            if progress:
                progress(report)
    finally:
        if log_file:
            log_file.close()
    return cloud, state, reports
