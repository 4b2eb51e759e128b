"""Training objective: binary cross-entropy plus smoothed Dice loss, summed over heads."""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, ShapeError


@dataclass
class LossConfig:
    epsilon: float = 1.0
    clip_delta: float = 1e-7
    bce_reduction: str = "mean"
    head_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    dice_enabled: bool = True

    def __post_init__(self):
        self.head_weights = tuple(float(w) for w in self.head_weights)

    def validate(self):
        if not self.epsilon > 0:
            raise ConfigError("loss.epsilon must be > 0")
        if not 0 < self.clip_delta < 0.5:
            raise ConfigError("loss.clip_delta must lie in (0, 0.5)")
        if self.bce_reduction not in ("sum", "mean"):
            raise ConfigError("loss.bce_reduction must be 'sum' or 'mean'")
        if len(self.head_weights) != 5 or min(self.head_weights) < 0 or not any(self.head_weights):
            raise ConfigError("loss.head_weights needs 5 non-negative values, not all zero")
        return self


def _flat_pair(y, p):
    y = torch.as_tensor(y)
    p = torch.as_tensor(p)
    if y.numel() != p.numel():
        raise ShapeError(f"length mismatch: y has {y.numel()} values, p has {p.numel()}")
    if not p.is_floating_point():
        p = p.double()
    return y.reshape(-1).to(p.dtype), p.reshape(-1)


def bce(y, p, cfg=None):
    cfg = cfg or LossConfig()
    y, p = _flat_pair(y, p)
    p = p.clamp(cfg.clip_delta, 1.0 - cfg.clip_delta)
    total = -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).sum()
    if cfg.bce_reduction == "mean":
        total = total / y.numel()
    return total


def dice_loss(y, p, epsilon=1.0):
    y, p = _flat_pair(y, p)
    return 1.0 - (2.0 * (y * p).sum() + epsilon) / (y.sum() + p.sum() + epsilon)


def combined_loss(y, p, cfg=None):
    cfg = cfg or LossConfig()
    loss = bce(y, p, cfg)
    if cfg.dice_enabled:
        loss = loss + dice_loss(y, p, cfg.epsilon)
    return loss


def combined_loss_grad(y, p, cfg=None):
    """Closed-form gradient of :func:`combined_loss` with respect to ``p`` (numpy)."""
    cfg = cfg or LossConfig()
    y = np.asarray(y, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    inside = (p > cfg.clip_delta) & (p < 1.0 - cfg.clip_delta)
    pc = np.clip(p, cfg.clip_delta, 1.0 - cfg.clip_delta)
    grad = np.where(inside, -y / pc + (1.0 - y) / (1.0 - pc), 0.0)
    if cfg.bce_reduction == "mean":
        grad = grad / y.size
    if cfg.dice_enabled:
        num = 2.0 * np.dot(y, p) + cfg.epsilon
        den = y.sum() + p.sum() + cfg.epsilon
        grad = grad - (2.0 * y * den - num) / den**2
    return grad


def per_sample_combined(y, p, cfg):
    """Combined loss for each item of a ``(B, ...)`` batch, returned as a ``(B,)`` tensor."""
    if y.shape != p.shape:
        raise ShapeError(f"prediction {tuple(p.shape)} does not match target {tuple(y.shape)}")
    y = y.reshape(y.shape[0], -1).to(p.dtype)
    p = p.reshape(p.shape[0], -1)
    pc = p.clamp(cfg.clip_delta, 1.0 - cfg.clip_delta)
    loss = -(y * torch.log(pc) + (1.0 - y) * torch.log(1.0 - pc)).sum(dim=1)
    if cfg.bce_reduction == "mean":
        loss = loss / y.shape[1]
    if cfg.dice_enabled:
        loss = loss + 1.0 - (2.0 * (y * p).sum(1) + cfg.epsilon) / (y.sum(1) + p.sum(1) + cfg.epsilon)
    return loss


def multi_head_loss(preds, y, cfg=None):
    """Weighted sum over supervised heads of the batch-mean combined loss.

    A vanilla-decoder prediction set (no side maps) is scored on its single
    fused head with the fused weight.
    """
    cfg = cfg or LossConfig()
    heads = list(preds.side) + [preds.fused]
    weights = cfg.head_weights[: len(preds.side)] + (cfg.head_weights[4],)
    total = 0.0
    for w, p in zip(weights, heads):
        if w:
            total = total + w * per_sample_combined(y, p, cfg).mean()
    return total
