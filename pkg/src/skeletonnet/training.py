"""Adam training loop with plateau learning-rate decay, early stopping and
best-validation checkpointing, plus the overfit and gradient-check harnesses."""

from contextlib import contextmanager
import copy
import csv
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import torch
from torch import nn

from .dataset import to_arrays
from .errors import ConfigError, EmptyDatasetError, NumericalError
from .evaluation import binarize, f1_score
from .loss import LossConfig, multi_head_loss, per_sample_combined
from .network import HEAD_NAMES, build, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    plateau_patience: int = 10
    plateau_factor: float = 0.1
    batch_size: int = 4
    max_epochs: int = 500
    early_stop_patience: int = 20
    min_improvement: float = 1e-4
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if not self.lr0 > 0:
            raise ConfigError("train.lr0 must be > 0")
        if not 0 < self.plateau_factor < 1:
            raise ConfigError("train.plateau_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("train.batch_size and train.max_epochs must be >= 1")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        self.loss.validate()
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    f1: dict


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"] + [f"f1_{h}" for h in HEAD_NAMES])
            for r in self.records:
                f1s = [repr(r.f1[h]) if h in r.f1 else "" for h in HEAD_NAMES]
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr)] + f1s)


@dataclass
class Checkpoint:
    config: object
    state: dict
    epoch: int

    @classmethod
    def capture(cls, model, epoch):
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(copy.deepcopy(model.config), state, epoch)

    def to_model(self):
        model = build(self.config)
        model.load_state_dict(self.state)
        model.eval()
        return model

    def save(self, path, extra=None):
        save_checkpoint(path, self.to_model(), extra)


def set_deterministic(enabled=True):
    """Single-threaded, deterministic kernels (needed for bit-identical replays)."""
    if enabled:
        torch.set_num_threads(1)
    torch.use_deterministic_algorithms(enabled)


@contextmanager
def frozen_bn_stats(model):
    """Forward in training mode without touching BN running statistics."""
    bns = [m for m in model.modules() if isinstance(m, nn.BatchNorm2d)]
    saved = [m.momentum for m in bns]
    for m in bns:
        m.momentum = 0.0
    try:
        yield
    finally:
        for m, mom in zip(bns, saved):
            m.momentum = mom


def _as_tensors(data, dtype):
    if isinstance(data, tuple) and len(data) == 2 and isinstance(data[0], np.ndarray):
        x, y = data
    else:
        if not data:
            raise EmptyDatasetError("training and validation sets must be non-empty")
        x, y = to_arrays(data)
    return torch.from_numpy(np.asarray(x)).to(dtype), torch.from_numpy(np.asarray(y)).to(dtype)


def validate_model(model, x, y, cfg, threshold=0.5):
    """Mean per-image weighted loss and per-head mean F1 in inference mode."""
    model.eval()
    losses, f1s = [], {}
    with torch.no_grad():
        for start in range(0, x.shape[0], cfg.batch_size):
            xb, yb = x[start:start + cfg.batch_size], y[start:start + cfg.batch_size]
            preds = model(xb)
            heads = preds.heads()
            weights = dict(zip(HEAD_NAMES, cfg.loss.head_weights))
            per_item = sum(weights[h] * per_sample_combined(yb, p, cfg.loss) for h, p in heads.items() if weights[h])
            losses.extend(per_item.tolist())
            gt = yb[:, 0].cpu().numpy()
            for h, p in heads.items():
                probs = p[:, 0].cpu().numpy()
                f1s.setdefault(h, []).extend(f1_score(binarize(probs[i], threshold), gt[i]) for i in range(len(gt)))
    return float(np.mean(losses)), {h: float(np.mean(v)) for h, v in f1s.items()}


class PlateauSchedule:
    """Tracks validation loss: decays the learning rate after ``patience`` stale
    epochs (repeatedly) and flags a stop after ``stop_patience`` stale epochs."""

    def __init__(self, lr0, factor=0.1, patience=10, stop_patience=20, min_improvement=1e-4):
        self.lr = lr0
        self.factor = factor
        self.patience = patience
        self.stop_patience = stop_patience
        self.min_improvement = min_improvement
        self.best = math.inf
        self.since_best = 0
        self.since_decay = 0
        self.n_decays = 0

    def update(self, val_loss):
        """Record one epoch; return True when it is a new best."""
        if val_loss < self.best - self.min_improvement:
            self.best = val_loss
            self.since_best = self.since_decay = 0
            return True
        self.since_best += 1
        self.since_decay += 1
        if self.since_decay >= self.patience:
            self.lr *= self.factor
            self.n_decays += 1
            self.since_decay = 0
        return False

    @property
    def should_stop(self):
        return self.since_best >= self.stop_patience


def train(model, train_set, val_set, cfg=None):
    """Train ``model`` in place and return ``(best_checkpoint, history)``.

    Datasets are lists of (ShapeMask, SkeletonMask) pairs or ``(x, y)`` arrays
    shaped ``(N, 1, H, W)``. Raises :class:`NumericalError` carrying the
    partial history if the loss becomes non-finite.
    """
    cfg = (cfg or TrainConfig()).validate()
    dtype = next(model.parameters()).dtype
    x_train, y_train = _as_tensors(train_set, dtype)
    x_val, y_val = _as_tensors(val_set, dtype)

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr0, betas=(0.9, 0.999), eps=1e-8)
    lr = cfg.lr0
    schedule = PlateauSchedule(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience,
                               cfg.early_stop_patience, cfg.min_improvement)
    history = TrainHistory()
    best = None
    n = x_train.shape[0]

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = torch.from_numpy(rng.permutation(n))
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            try:
                loss = multi_head_loss(model(x_train[idx]), y_train[idx], cfg.loss)
            except NumericalError as exc:
                raise NumericalError(str(exc), history) from exc
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}", history)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)

        val_loss, f1 = validate_model(model, x_val, y_val, cfg)
        if not math.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}", history)
        history.records.append(EpochRecord(epoch, total / n, val_loss, lr, f1))
        log.info("epoch %d train %.5f val %.5f lr %.2e fused-F1 %.4f", epoch, total / n, val_loss, lr, f1["fused"])

        if schedule.update(val_loss):
            best = Checkpoint.capture(model, epoch)
            history.best_epoch = epoch
        if schedule.lr != lr:
            lr = schedule.lr
            for group in optimizer.param_groups:
                group["lr"] = lr
        if schedule.should_stop:
            break
    return best, history


def overfit_single_batch(model, batch, steps, cfg=None, trace=None):
    """Run ``steps`` Adam updates on one fixed batch and return the final total loss.

    ``batch`` is ``(x, y)`` tensors or arrays shaped ``(B, 1, H, W)`` with B <= 4.
    If ``trace`` is a list, the pre-update loss of every step is appended to it.
    """
    cfg = (cfg or TrainConfig()).validate()
    dtype = next(model.parameters()).dtype
    x, y = (torch.as_tensor(np.asarray(a)).to(dtype) for a in batch)
    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr0, betas=(0.9, 0.999), eps=1e-8)
    model.train()
    for step in range(steps):
        optimizer.zero_grad()
        loss = multi_head_loss(model(x), y, cfg.loss)
        if not torch.isfinite(loss):
            raise NumericalError(f"non-finite loss at step {step}")
        loss.backward()
        optimizer.step()
        if trace is not None:
            trace.append(loss.item())
    with torch.no_grad(), frozen_bn_stats(model):
        return float(multi_head_loss(model(x), y, cfg.loss))


@dataclass
class GradCheckResult:
    max_rel_error: float
    entries: list

    def by_group(self):
        out = {}
        for e in self.entries:
            out[e["group"]] = max(out.get(e["group"], 0.0), e["rel_error"])
        return out


def relative_error(analytic, numeric, zero_tol=1e-10):
    scale = max(abs(analytic), abs(numeric))
    if scale < zero_tol:
        return 0.0
    return abs(analytic - numeric) / scale


def gradient_check(model, pair, n_params=20, step=1e-4, seed=0, loss_cfg=None, groups=None):
    """Compare autograd parameter gradients with central finite differences.

    Runs on a float64 copy of ``model`` in training mode (batch statistics) with
    BN running statistics frozen. ``pair`` is ``(x, y)`` shaped ``(B, 1, H, W)``.
    ``groups`` maps a label to ``(name, parameter)`` lists; ``n_params`` indices
    are drawn per group (or over all parameters when ``groups`` is None).
    """
    loss_cfg = loss_cfg or LossConfig()
    probe = copy.deepcopy(model).double().train()
    x, y = (torch.as_tensor(np.asarray(a), dtype=torch.float64) for a in pair)
    if groups is None:
        groups = {"all": list(probe.named_parameters())}
    else:
        named = dict(probe.named_parameters())
        groups = {g: [(n, named[n]) for n, _ in items] for g, items in groups.items()}

    def loss_value():
        return multi_head_loss(probe(x), y, loss_cfg)

    with frozen_bn_stats(probe):
        probe.zero_grad()
        loss_value().backward()
        rng = np.random.default_rng(seed)
        entries = []
        with torch.no_grad():
            for label, items in groups.items():
                sizes = np.array([p.numel() for _, p in items])
                flat = rng.choice(sizes.sum(), size=min(n_params, sizes.sum()), replace=False)
                for k in np.sort(flat):
                    which = int(np.searchsorted(np.cumsum(sizes), k, side="right"))
                    name, p = items[which]
                    offset = int(k - (np.cumsum(sizes)[which] - sizes[which]))
                    view = p.view(-1)
                    orig = view[offset].item()
                    view[offset] = orig + step
                    up = loss_value().item()
                    view[offset] = orig - step
                    down = loss_value().item()
                    view[offset] = orig
                    numeric = (up - down) / (2 * step)
                    analytic = p.grad.view(-1)[offset].item()
                    entries.append({
                        "group": label, "name": name, "index": offset,
                        "analytic": analytic, "numeric": numeric,
                        "rel_error": relative_error(analytic, numeric),
                    })
    return GradCheckResult(max(e["rel_error"] for e in entries), entries)
