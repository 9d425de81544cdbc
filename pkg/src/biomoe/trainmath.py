"""Training-time scalar machinery: multitask loss, schedules, smoothed
cross-entropy, and macro metrics. Pure functions, oracle-testable."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class TrainMathError(ValueError):
    pass


class LossVariant(Enum):
    AS_WRITTEN = "as_written"
    UNCERTAINTY = "uncertainty"


def multitask_loss(losses, weights, variant: LossVariant = LossVariant.AS_WRITTEN):
    """Weighted multitask total and its analytic gradient in the weights.

    AS_WRITTEN: sum(e^w L + w), d/dw = e^w L + 1. It has no finite minimizer
    for positive losses (gradient always positive); UNCERTAINTY is the
    standard corrected form sum(e^-w L + w) with d/dw = 1 - e^-w L, minimized
    at w = ln L.
    """
    L = np.asarray(losses, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if L.shape != w.shape or L.ndim != 1 or L.size == 0:
        raise TrainMathError(f"multitask_loss: losses {L.shape} vs weights {w.shape}")
    if not (np.isfinite(L).all() and np.isfinite(w).all()):
        raise TrainMathError("multitask_loss: non-finite input")
    if variant is LossVariant.AS_WRITTEN:
        ew = np.exp(w)
        total = float(np.sum(ew * L + w))
        grad = ew * L + 1.0
    else:
        ew = np.exp(-w)
        total = float(np.sum(ew * L + w))
        grad = 1.0 - ew * L
    return total, grad


@dataclass(frozen=True)
class ScheduleConfig:
    T: int
    p_start: float = 0.10
    p_end: float = 0.20
    eps_start: float = 0.20
    eps_end: float = 0.0
    warmup: int = -1        # -1: 5% of T
    cooldown: int = -1      # -1: 10% of T
    base_lr: float = 1e-4
    lr_floor: float = 0.0
    batch_size: int = 32
    epochs: int = 200

    def __post_init__(self):
        if self.T < 1:
            raise TrainMathError(f"ScheduleConfig: T must be >= 1, got {self.T}")
        if self.warmup < 0:
            object.__setattr__(self, "warmup", round(0.05 * self.T))
        if self.cooldown < 0:
            object.__setattr__(self, "cooldown", round(0.10 * self.T))
        for name in ("p_start", "p_end", "eps_start", "eps_end"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise TrainMathError(f"ScheduleConfig: {name}={v} outside [0, 1]")
        if self.warmup + self.cooldown > self.T:
            raise TrainMathError(
                f"ScheduleConfig: warmup {self.warmup} + cooldown {self.cooldown} > T {self.T}")
        if self.base_lr <= 0 or self.lr_floor < 0:
            raise TrainMathError("ScheduleConfig: bad learning-rate bounds")


def _check_step(t: int, cfg: ScheduleConfig):
    if not (0 <= t <= cfg.T):
        raise TrainMathError(f"step {t} outside [0, {cfg.T}]")


def dropout_rate(t: int, cfg: ScheduleConfig) -> float:
    _check_step(t, cfg)
    return cfg.p_start + (t / cfg.T) * (cfg.p_end - cfg.p_start)


def smoothing_eps(t: int, cfg: ScheduleConfig) -> float:
    _check_step(t, cfg)
    return cfg.eps_start + (t / cfg.T) * (cfg.eps_end - cfg.eps_start)


def cosine_lr(t: int, cfg: ScheduleConfig) -> float:
    """Linear warmup to base_lr, cosine decay to lr_floor, linear tail to 0."""
    _check_step(t, cfg)
    cool_start = cfg.T - cfg.cooldown
    if t < cfg.warmup:
        return cfg.base_lr * (t / cfg.warmup)
    if t <= cool_start:
        span = cool_start - cfg.warmup
        if span == 0:
            return cfg.base_lr
        phase = (t - cfg.warmup) / span
        return cfg.lr_floor + 0.5 * (cfg.base_lr - cfg.lr_floor) * (1.0 + np.cos(np.pi * phase))
    return cfg.lr_floor * (cfg.T - t) / cfg.cooldown


LOG_FLOOR = 1e-12


def smoothed_cross_entropy(probs, true_class: int, eps: float) -> float:
    """-sum(target * log probs) against (1-eps) one-hot + eps/n targets."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise TrainMathError(f"smoothed_cross_entropy: need a 1-D probability vector, got {p.shape}")
    if not np.isfinite(p).all() or p.min() < 0 or abs(p.sum() - 1.0) > 1e-6:
        raise TrainMathError("smoothed_cross_entropy: probs must be nonnegative and sum to 1")
    if not (0.0 <= eps < 1.0):
        raise TrainMathError(f"smoothed_cross_entropy: eps {eps} outside [0, 1)")
    n = p.size
    if not (0 <= true_class < n):
        raise TrainMathError(f"smoothed_cross_entropy: class {true_class} out of range")
    target = np.full(n, eps / n)
    target[true_class] += 1.0 - eps
    return float(-np.sum(target * np.log(np.maximum(p, LOG_FLOOR))))


def confusion_from_pairs(labels, preds, classes=None) -> np.ndarray:
    """Rows = true class, in the order of `classes` (default: sorted union)."""
    labels = list(labels)
    preds = list(preds)
    if len(labels) != len(preds):
        raise TrainMathError(f"{len(labels)} labels vs {len(preds)} predictions")
    if classes is None:
        classes = sorted(set(labels) | set(preds))
    index = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for y, yhat in zip(labels, preds):
        cm[index[y], index[yhat]] += 1
    return cm


def macro_metrics(cm) -> dict:
    """Macro accuracy (mean recall), precision, and F1 with 0/0 := 0."""
    m = np.asarray(cm)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise TrainMathError(f"macro_metrics: need a square matrix of n >= 2, got {m.shape}")
    if (m < 0).any():
        raise TrainMathError("macro_metrics: negative counts")
    if m.sum() < 1:
        raise TrainMathError("macro_metrics: empty confusion matrix")
    m = m.astype(np.float64)
    diag = np.diag(m)
    rows = m.sum(axis=1)
    cols = m.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(rows > 0, diag / rows, 0.0)
        precision = np.where(cols > 0, diag / cols, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    return {
        "accuracy": float(recall.mean()),
        "precision": float(precision.mean()),
        "f1": float(f1.mean()),
    }
