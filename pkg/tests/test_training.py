import csv
import math

import pytest
import torch

from skeletonnet.dataset import to_arrays
from skeletonnet.errors import ConfigError, NumericalError
from skeletonnet.loss import multi_head_loss
from skeletonnet.network import NetworkConfig, block_parameter_groups, build
from skeletonnet.training import (
    PlateauSchedule, TrainConfig, gradient_check, overfit_single_batch, relative_error, train,
)


def tiny(**kw):
    base = dict(input_size=(32, 32), base_channels=4, se_ratio=2)
    base.update(kw)
    return NetworkConfig(**base)


def test_published_defaults():
    cfg = TrainConfig()
    assert (cfg.lr0, cfg.plateau_factor, cfg.plateau_patience, cfg.batch_size, cfg.max_epochs) == (
        0.001, 0.1, 10, 4, 500)
    with pytest.raises(ConfigError):
        TrainConfig(plateau_factor=1.0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(lr0=0).validate()


def test_plateau_schedule_repeated_decay_and_stop():
    s = PlateauSchedule(1e-3, factor=0.1, patience=3, stop_patience=7, min_improvement=1e-4)
    assert s.update(1.0)
    lrs = []
    for _ in range(7):
        assert not s.update(1.0 - 5e-5)  # below the improvement threshold
        lrs.append(s.lr)
    assert lrs == pytest.approx([1e-3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-5, 1e-5])
    assert s.lr == pytest.approx(1e-3 * 0.1 ** s.n_decays)
    assert s.should_stop
    s.update(0.5)
    assert not s.should_stop and s.since_decay == 0


def test_single_step_run(corpus32, monkeypatch):
    calls = []
    original = torch.optim.Adam.step
    monkeypatch.setattr(torch.optim.Adam, "step", lambda self, *a, **k: calls.append(1) or original(self, *a, **k))
    model = build(tiny())
    fresh = build(tiny())
    best, history = train(model, corpus32[:2], corpus32[2:4], TrainConfig(max_epochs=1, batch_size=4))
    assert len(calls) == 1
    assert len(history.records) == 1 and history.best_epoch == 1 and best.epoch == 1
    moved = [not torch.equal(p, q) for p, q in zip(model.parameters(), fresh.parameters())]
    assert sum(moved) > 0.9 * len(moved)


def test_history_monotone_lr_and_early_stop(corpus32):
    cfg = TrainConfig(max_epochs=12, plateau_patience=2, early_stop_patience=3, lr0=3e-3, min_improvement=10.0)
    # an impossible improvement threshold forces stale epochs after the first
    _, history = train(build(tiny()), corpus32[:4], corpus32[4:], cfg)
    lrs = [r.lr for r in history.records]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert history.best_epoch == 1
    assert len(history.records) == history.best_epoch + cfg.early_stop_patience
    assert lrs[-1] == pytest.approx(3e-4)


def test_train_is_deterministic(corpus32):
    cfg = TrainConfig(max_epochs=2, batch_size=3, seed=4)
    _, h1 = train(build(tiny()), corpus32[:5], corpus32[5:], cfg)
    _, h2 = train(build(tiny()), corpus32[:5], corpus32[5:], cfg)
    assert [(r.train_loss, r.val_loss, r.f1) for r in h1.records] == [(r.train_loss, r.val_loss, r.f1) for r in h2.records]


def test_history_csv(tmp_path, corpus32):
    _, history = train(build(tiny()), corpus32[:3], corpus32[3:5], TrainConfig(max_epochs=2))
    history.to_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "lr", "f1_side1", "f1_side2", "f1_side3", "f1_side4", "f1_fused"]
    assert len(rows) == 3 and float(rows[1][3]) == 0.001


def test_vanilla_training_records_fused_only(tmp_path, corpus32):
    _, history = train(build(tiny(side_layers_enabled=False)), corpus32[:3], corpus32[3:5], TrainConfig(max_epochs=1))
    assert set(history.records[0].f1) == {"fused"}
    history.to_csv(tmp_path / "h.csv")
    assert open(tmp_path / "h.csv").read().splitlines()[1].split(",")[4:8] == ["", "", "", ""]


def test_numerical_error_keeps_partial_history(corpus32):
    model = build(tiny())
    with torch.no_grad():
        model.fusion.bias.fill_(float("nan"))
    with pytest.raises(NumericalError) as info:
        train(model, corpus32[:2], corpus32[2:4], TrainConfig(max_epochs=1))
    assert info.value.history is not None and info.value.history.records == []


def test_checkpoint_to_model_reproduces_outputs(corpus32):
    model = build(tiny())
    best, _ = train(model, corpus32[:4], corpus32[4:], TrainConfig(max_epochs=1))
    restored = best.to_model()
    model.eval()
    x = torch.from_numpy(to_arrays(corpus32[:2])[0])
    with torch.no_grad():
        assert torch.equal(model(x).fused, restored(x).fused)


def test_overfit_zero_steps_and_descent(corpus32):
    x, y = to_arrays(corpus32[:4])
    model = build(tiny())
    model.train()
    with torch.no_grad():
        initial = multi_head_loss(model(torch.from_numpy(x)), torch.from_numpy(y)).item()
    fresh = build(tiny())
    assert overfit_single_batch(fresh, (x, y), 0) == pytest.approx(initial, rel=1e-6)
    trace = []
    final = overfit_single_batch(fresh, (x, y), 60, trace=trace)
    assert len(trace) == 60 and final < trace[0]


def test_relative_error_zero_case():
    assert relative_error(0.0, 5e-11) == 0.0
    assert relative_error(1.0, 1.0 + 1e-6) == pytest.approx(1e-6, rel=1e-3)


def test_gradient_check_small_model(corpus32):
    model = build(tiny())
    s, k = corpus32[0]
    pair = (s.pixels[None, None], k.pixels[None, None])
    result = gradient_check(model, pair, n_params=5, step=1e-4, groups=block_parameter_groups(model))
    assert result.max_rel_error < 1e-3
    assert set(result.by_group()) == set(block_parameter_groups(model))
    coarse = gradient_check(model, pair, n_params=5, step=1e-2, groups=block_parameter_groups(model))
    # a coarse step only degrades accuracy; it is reported, not asserted
    assert math.isfinite(coarse.max_rel_error)
    # the probe never touches the original model
    assert next(model.parameters()).dtype == torch.float32
