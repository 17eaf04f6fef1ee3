"""Training loop: SGD with momentum, 1cycle schedule, clipping, LR range test.

The schedule ramps the learning rate linearly from 0.008 to 0.2 over the
first 18 epochs, then cosine-anneals down to 0.0002 over the remaining 42;
momentum runs inversely between 0.95 and 0.8. One optimizer step per
sequence (batch size 1), full backpropagation through the sequence with no
truncation, global gradient-norm clipping at 5.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import DivergenceError, EVAL_PLAN, ModelParams, make_dropout_plan, sequence_nll


@dataclass
class TrainConfig:
    epochs: int = 60
    warmup_epochs: int = 18
    lr_start: float = 0.008
    lr_max: float = 0.2
    lr_final: float = 0.0002
    momentum_low: float = 0.8
    momentum_high: float = 0.95
    clip_norm: float = 5.0
    seed: int = 0
    augment: str = "none"       # none | transpose | transpose+modeswap
    streams: str = "CSBAT"

    def __post_init__(self) -> None:
        if not self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must be < epochs")


def schedule_at(config: TrainConfig, step: int, steps_per_epoch: int) -> tuple[float, float]:
    """(lr, momentum) for optimizer step `step` (0-based).

    Warmup is linear over warmup_epochs; the anneal is cosine and reaches
    its endpoints exactly at the last step index (epochs*steps_per_epoch-1).
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    warmup_steps = config.warmup_epochs * steps_per_epoch
    last_step = config.epochs * steps_per_epoch - 1
    if step < warmup_steps:
        frac = step / warmup_steps
        lr = config.lr_start + (config.lr_max - config.lr_start) * frac
        momentum = config.momentum_high + (config.momentum_low - config.momentum_high) * frac
        return lr, momentum
    frac = min((step - warmup_steps) / max(last_step - warmup_steps, 1), 1.0)
    cos = (1.0 + math.cos(math.pi * frac)) / 2.0
    lr = config.lr_final + (config.lr_max - config.lr_final) * cos
    momentum = config.momentum_high + (config.momentum_low - config.momentum_high) * cos
    return lr, momentum


def clip_gradients(tensors, max_norm: float = 5.0) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm.
    Returns the scale applied (1.0 when no clipping happened)."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float(np.sum(np.square(t.grad, dtype=np.float64)))
    norm = math.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    scale = max_norm / norm
    for t in tensors:
        if t.grad is not None:
            t.grad *= scale
    return scale


def sgd_update(params: ModelParams, lr: float, momentum: float, velocity: dict) -> None:
    """Classical momentum: v <- momentum*v + g; theta <- theta - lr*v."""
    for name, tensor in params.named():
        grad = tensor.grad
        if grad is None:
            continue
        if not np.isfinite(grad).all():
            raise DivergenceError(f"non-finite gradient in {name}")
        v = velocity.setdefault(name, np.zeros_like(tensor.data))
        v *= momentum
        v += grad
        tensor.data -= (lr * v).astype(tensor.data.dtype)


@dataclass
class EpochRecord:
    epoch: int
    mean_train_nll: float
    val_full_nll: float
    val_ncl_nll: float
    val_full_acc: float
    val_ncl_acc: float
    lr_start_of_epoch: float
    wall_seconds: float

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_params: ModelParams | None = None
    best_val_nll: float = math.inf
    diverged: bool = False


def _clone_params(params: ModelParams) -> ModelParams:
    tensors = {
        name: ad.Tensor(t.data.copy(), requires_grad=True, name=name)
        for name, t in params.tensors.items()
    }
    return ModelParams(arch=params.arch, tensors=tensors, streams=params.streams)


def train(
    params: ModelParams,
    train_seqs,
    val_seqs,
    config: TrainConfig,
    epoch_callback=None,
) -> TrainResult:
    """Train in place over encoded sequences; keeps the best-validation
    checkpoint. `train_seqs`/`val_seqs` are lists of EncodedSequence (or
    (x, z) pairs). On divergence the last good state is preserved in
    `best_params` and the result is flagged."""
    from .evaluator import evaluate_sequences  # local import, avoids a cycle

    rng = np.random.default_rng(config.seed)
    steps_per_epoch = len(train_seqs)
    if steps_per_epoch == 0:
        raise ValueError("empty training set")
    velocity: dict = {}
    result = TrainResult()
    global_step = 0
    for epoch in range(config.epochs):
        t0 = time.time()
        lr_epoch, _ = schedule_at(config, global_step, steps_per_epoch)
        order = rng.permutation(steps_per_epoch)
        losses = []
        try:
            for seq_idx in order:
                seq = train_seqs[seq_idx]
                x = seq.x if hasattr(seq, "x") else seq[0]
                plan = make_dropout_plan(rng, len(x) - 1, params.arch)
                params.zero_grad()
                loss, _ = sequence_nll(params, seq, plan)
                ad.backward(loss)
                clip_gradients(params.trainable(), config.clip_norm)
                lr, momentum = schedule_at(config, global_step, steps_per_epoch)
                sgd_update(params, lr, momentum, velocity)
                losses.append(float(loss.data))
                global_step += 1
        except DivergenceError:
            result.diverged = True
            break
        report = evaluate_sequences(params, val_seqs)
        record = EpochRecord(
            epoch=epoch,
            mean_train_nll=float(np.mean(losses)),
            val_full_nll=report.full_nll,
            val_ncl_nll=report.ncl_nll,
            val_full_acc=report.full_acc,
            val_ncl_acc=report.ncl_acc,
            lr_start_of_epoch=lr_epoch,
            wall_seconds=time.time() - t0,
        )
        result.log.append(record)
        if record.val_full_nll < result.best_val_nll:
            result.best_val_nll = record.val_full_nll
            result.best_params = _clone_params(params)
        if epoch_callback is not None:
            epoch_callback(record)
    return result


def overfit_one(
    params: ModelParams,
    seq,
    steps: int = 2000,
    lr: float = 0.05,
    momentum: float = 0.9,
    clip_norm: float = 5.0,
) -> list:
    """Sanity mode: hammer one sequence with a fixed lr, dropout off, and
    return the per-step eval-mode NLL trace."""
    velocity: dict = {}
    trace = []
    for _ in range(steps):
        params.zero_grad()
        loss, _ = sequence_nll(params, seq, EVAL_PLAN)
        ad.backward(loss)
        clip_gradients(params.trainable(), clip_norm)
        sgd_update(params, lr, momentum, velocity)
        trace.append(float(loss.data))
    return trace


@dataclass
class LrRangeResult:
    curve: list  # (lr, raw loss, smoothed loss)
    suggested_lr: float | None
    aborted_early: bool = False


def lr_range_test(
    params: ModelParams,
    train_seqs,
    config: TrainConfig | None = None,
    lr_min: float = 1e-5,
    lr_max: float = 1.0,
    num_steps: int = 100,
    seed: int = 0,
    smoothing: float = 0.98,
) -> LrRangeResult:
    """Exponential lr sweep over single-sequence steps. The suggestion is
    the lr at the steepest descent of the smoothed loss; the sweep aborts
    once the smoothed loss exceeds 4x its running minimum."""
    if not lr_min < lr_max:
        raise ValueError("lr_min must be < lr_max")
    if num_steps < 10:
        raise ValueError("num_steps must be >= 10")
    clip_norm = config.clip_norm if config else 5.0
    momentum = 0.0
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(train_seqs))
    velocity: dict = {}
    curve = []
    smoothed = None
    best_smoothed = math.inf
    aborted = False
    for step in range(num_steps):
        lr = lr_min * (lr_max / lr_min) ** (step / (num_steps - 1))
        seq = train_seqs[order[step % len(order)]]
        x = seq.x if hasattr(seq, "x") else seq[0]
        plan = make_dropout_plan(rng, len(x) - 1, params.arch)
        params.zero_grad()
        try:
            loss, _ = sequence_nll(params, seq, plan)
            ad.backward(loss)
            clip_gradients(params.trainable(), clip_norm)
            sgd_update(params, lr, momentum, velocity)
        except DivergenceError:
            aborted = True
            break
        raw = float(loss.data)
        smoothed = raw if smoothed is None else smoothing * smoothed + (1 - smoothing) * raw
        curve.append((lr, raw, smoothed))
        best_smoothed = min(best_smoothed, smoothed)
        if smoothed > 4.0 * best_smoothed:
            aborted = True
            break
    suggestion = None
    best_slope = 0.0
    for (lr0, _, s0), (lr1, _, s1) in zip(curve, curve[1:]):
        slope = (s1 - s0) / (math.log(lr1) - math.log(lr0))
        if slope < best_slope:
            best_slope = slope
            suggestion = lr1
    return LrRangeResult(curve=curve, suggested_lr=suggestion, aborted_early=aborted)
