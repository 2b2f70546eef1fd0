"""Training-time mathematics as standalone, verifiable operations.

Weighted binary cross-entropy over extended onset labels, the masked
velocity loss, their multi-task combination, He initialization, the
warm-restart learning-rate schedule, finite-difference gradient checks
and a desk-scale overfit harness. No optimizer loop lives here; the
schedule and decay constants are exposed for external trainers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model.config import ModelConfig
from .model.network import ov_forward
from .model.weights import ModelWeights, schema


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 10.0
    positive_weight: float = 8.0
    eps: float = 1e-7

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.positive_weight,
               self.eps) <= 0:
            raise ValueError("loss weights must be > 0")


@dataclass(frozen=True)
class ScheduleParams:
    peak_lr: float = 0.008
    rampup_steps: int = 500
    cycle_steps: int = 1000
    cycle_decay: float = 0.975
    weight_decay: float = 3e-4
    bn_momentum: float = 0.95
    dropout_p: float = 0.15

    def __post_init__(self):
        if not 0 < self.cycle_decay <= 1:
            raise ValueError("cycle_decay must be in (0, 1]")
        if self.rampup_steps <= 0 or self.cycle_steps <= 0:
            raise ValueError("schedule step counts must be > 0")


def _bce_terms(target, pred, eps):
    target = np.asarray(target, dtype=np.float64)
    pred = np.clip(np.asarray(pred, dtype=np.float64), eps, 1.0 - eps)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {pred.shape}")
    return target, -target * np.log(pred) - (1 - target) * np.log(1 - pred)


def weighted_bce(target, pred, positive_weight: float = 8.0,
                 eps: float = 1e-7, reduction: str = "mean") -> float:
    """Cross-entropy with positives up-weighted against label sparsity.

    The weight is 1 + (positive_weight - 1) * target, i.e. exactly
    positive_weight on active entries of a boolean roll.
    """
    target, ce = _bce_terms(target, pred, eps)
    weights = 1.0 + (positive_weight - 1.0) * target
    total = float(np.sum(weights * ce))
    return total / target.size if reduction == "mean" else total


def masked_velocity_loss(mask, target, pred, eps: float = 1e-7,
                         reduction: str = "mean") -> float:
    """Cross-entropy between velocity rolls, counted only under the mask."""
    target, ce = _bce_terms(target, pred, eps)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != target.shape:
        raise ValueError(f"mask shape {mask.shape} vs {target.shape}")
    total = float(np.sum(mask * ce))
    return total / max(1.0, float(np.sum(mask))) if reduction == "mean" \
        else total


def multitask_loss(extended_labels, stage_probs, onset_mask, vel_target,
                   vel_pred, weights: LossWeights = LossWeights(),
                   reduction: str = "mean"):
    """lambda1 * sum of per-stage BCE + lambda2 * masked velocity loss.

    Returns (total, breakdown) where breakdown maps 'stage{i}' and
    'velocity' to their unscaled terms.
    """
    if not stage_probs:
        raise ValueError("need at least one stage output")
    breakdown = {}
    bce_total = 0.0
    for i, probs in enumerate(stage_probs):
        term = weighted_bce(extended_labels, probs, weights.positive_weight,
                            weights.eps, reduction)
        breakdown[f"stage{i}"] = term
        bce_total += term
    vel_term = masked_velocity_loss(onset_mask, vel_target, vel_pred,
                                    weights.eps, reduction)
    breakdown["velocity"] = vel_term
    total = weights.lambda1 * bce_total + weights.lambda2 * vel_term
    return total, breakdown


def lr_schedule(step: int, p: ScheduleParams = ScheduleParams()) -> float:
    """Linear ramp-up, then cosine annealing with decaying warm restarts."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step < p.rampup_steps:
        return p.peak_lr * step / p.rampup_steps
    cycle, pos = divmod(step - p.rampup_steps, p.cycle_steps)
    u = pos / p.cycle_steps
    return p.peak_lr * p.cycle_decay ** cycle * 0.5 * (1 + math.cos(math.pi * u))


def he_init(cfg_or_weights, seed: int = 0) -> ModelWeights:
    """Fresh Gaussian-He weights for a config (or a weights' config).

    Zero biases except the pre-sigmoid attention biases (set to 1 so the
    gates start open); identity norm parameters; deterministic per seed.
    """
    cfg = cfg_or_weights.config if isinstance(cfg_or_weights, ModelWeights) \
        else cfg_or_weights
    rng = np.random.default_rng(seed)
    arrays = {}
    for spec in schema(cfg):
        if spec.role == "weight":
            std = math.sqrt(2.0 / spec.fan_in)
            arrays[spec.name] = rng.normal(0.0, std, spec.shape) \
                .astype(np.float32)
        elif spec.role == "att_bias":
            arrays[spec.name] = np.ones(spec.shape, dtype=np.float32)
        elif spec.role in ("gamma", "var"):
            arrays[spec.name] = np.ones(spec.shape, dtype=np.float32)
        else:
            arrays[spec.name] = np.zeros(spec.shape, dtype=np.float32)
    return ModelWeights(cfg, arrays).validate()


@dataclass
class GradCheckRecord:
    tensor: str
    index: tuple
    estimate: float
    halfstep_estimate: float
    rel_error: float
    flagged: bool


@dataclass
class GradCheckReport:
    max_rel_error: float
    records: list[GradCheckRecord] = field(default_factory=list)

    @property
    def flagged(self):
        return [r for r in self.records if r.flagged]


def finite_diff_gradcheck(loss_fn, weights: ModelWeights,
                          n_coords: int = 24, h: float = 1e-3,
                          seed: int = 0, names=None,
                          flag_above: float = 5e-2) -> GradCheckReport:
    """Richardson-consistency check of central-difference gradients.

    Samples coordinates from the learnable tensors, compares the
    central-difference slope at step h against the half-step estimate,
    and reports the worst relative deviation. Coordinates where the two
    disagree beyond ``flag_above`` are flagged as non-smooth (a leaky
    ReLU kink inside the step interval looks exactly like this).
    """
    if names is None:
        names = [s.name for s in schema(weights.config) if s.learnable]
    rng = np.random.default_rng(seed)
    records = []

    def slope(arr, index, step):
        # divide by the realized f32 parameter difference, not the
        # nominal step, so storage rounding does not bias the quotient
        original = arr[index]
        arr[index] = original + step
        hi = float(arr[index])
        up = loss_fn(weights)
        arr[index] = original - step
        lo = float(arr[index])
        down = loss_fn(weights)
        arr[index] = original
        if math.isnan(up) or math.isnan(down):
            raise ValueError(
                f"NaN loss while perturbing {index} (step {step})")
        return (up - down) / (hi - lo)

    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        arr = weights.arrays[name]
        index = tuple(rng.integers(dim) for dim in arr.shape)
        try:
            g_full = slope(arr, index, h)
            g_half = slope(arr, index, h / 2.0)
        except ValueError as exc:
            raise ValueError(f"gradcheck failed at {name}{index}: {exc}") \
                from exc
        denom = max(abs(g_full), abs(g_half), 1e-8)
        rel = abs(g_full - g_half) / denom
        records.append(GradCheckRecord(name, index, g_full, g_half, rel,
                                       rel > flag_above))
    return GradCheckReport(max((r.rel_error for r in records), default=0.0),
                           records)


@dataclass
class OverfitBatch:
    """One fixed input snippet with its quantized training targets."""

    features: np.ndarray        # (2, F, T')
    extended_labels: np.ndarray  # (K, T'), 3-frame onset labels
    onset_mask: np.ndarray      # (K, T'), single-frame onset labels
    vel_target: np.ndarray      # (K, T')


def make_overfit_batch(cfg: ModelConfig, frames: int = 6, seed: int = 0,
                       ambiguous: bool = False) -> OverfitBatch:
    """A single-onset snippet (or an uninformative 0.5-label one).

    The onset velocity is 1.0: cross-entropy against a soft target has
    an entropy floor, so only saturated targets let the loss approach
    zero during the overfit check.
    """
    rng = np.random.default_rng(seed)
    features = rng.normal(0.0, 1.0, (2, cfg.mel_bins, frames)) \
        .astype(np.float32)
    extended = np.zeros((cfg.keys, frames))
    mask = np.zeros_like(extended)
    vel = np.zeros_like(extended)
    if ambiguous:
        extended[:] = 0.5
        vel[:] = 0.5
        mask[:] = 1.0
    else:
        key, t = 0, frames // 3
        mask[key, t] = 1.0
        extended[key, t:t + 3] = 1.0
        vel[key, t:t + 3] = 1.0
    return OverfitBatch(features, extended, mask, vel)


def batch_loss(weights: ModelWeights, batch: OverfitBatch,
               loss_weights: LossWeights = LossWeights(),
               dtype=np.float64) -> float:
    """Multi-task loss of one forward pass over the batch."""
    out = ov_forward(batch.features.astype(dtype), weights)
    total, _ = multitask_loss(batch.extended_labels,
                              [p[0] for p in out.onset_probs],
                              batch.onset_mask, batch.vel_target,
                              out.velocity_probs[0], loss_weights)
    return total


@dataclass
class OverfitTrace:
    losses: list[float]
    diverged: bool = False

    @property
    def best(self) -> list[float]:
        """Running minimum of the losses (monotone summary)."""
        out = []
        current = math.inf
        for loss in self.losses:
            current = min(current, loss)
            out.append(current)
        return out

    @property
    def final_ratio(self) -> float:
        return self.best[-1] / self.losses[0]


def toy_overfit(weights: ModelWeights, batch: OverfitBatch,
                steps: int = 300, lr: float = 0.05,
                loss_weights: LossWeights = LossWeights(),
                h: float = 1e-3, stop_ratio: float | None = None,
                ) -> OverfitTrace:
    """Full finite-difference gradient descent on a tiny model.

    Every step estimates the complete gradient by central differences
    over all learnable coordinates, so keep the model under ~2k
    parameters. Stops early once the loss falls below ``stop_ratio``
    of its initial value; flags divergence past 10x the initial loss.
    """
    names = [s.name for s in schema(weights.config) if s.learnable]
    initial = batch_loss(weights, batch, loss_weights)
    trace = [initial]
    for _ in range(steps):
        grads = {}
        for name in names:
            flat = weights.arrays[name].reshape(-1)
            grad = np.zeros(flat.shape, dtype=np.float64)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                up = batch_loss(weights, batch, loss_weights)
                flat[i] = original - h
                down = batch_loss(weights, batch, loss_weights)
                flat[i] = original
                grad[i] = (up - down) / (2.0 * h)
            grads[name] = grad
        for name in names:
            flat = weights.arrays[name].reshape(-1)
            flat -= (lr * grads[name]).astype(np.float32)
        loss = batch_loss(weights, batch, loss_weights)
        trace.append(loss)
        if loss > 10.0 * initial:
            return OverfitTrace(trace, diverged=True)
        if stop_ratio is not None and loss <= stop_ratio * initial:
            break
    return OverfitTrace(trace)
