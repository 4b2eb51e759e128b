"""Coordinate-channel x loss grid and side-layer vs vanilla-decoder comparison."""

from dataclasses import dataclass, replace

from .evaluation import evaluate_dataset
from .network import build
from .training import train


@dataclass
class AblationRun:
    name: str
    coord_enabled: bool
    side_layers_enabled: bool
    dice_enabled: bool
    f1: float
    epochs: int


def ablation_configs():
    """The five distinct configurations; the full model appears once."""
    runs = []
    for coord in (False, True):
        for dice in (False, True):
            runs.append((f"coord={'on' if coord else 'off'},loss={'bce+dice' if dice else 'bce'}", coord, True, dice))
    runs.append(("vanilla-decoder", True, False, True))
    return runs


def run_ablation(train_set, val_set, net_cfg, train_cfg, threshold=0.5):
    """Train every configuration from the same seeds and score its fused head on ``val_set``."""
    results = []
    for name, coord, side, dice in ablation_configs():
        cfg_n = replace(net_cfg, coord_enabled=coord, side_layers_enabled=side)
        cfg_t = replace(train_cfg, loss=replace(train_cfg.loss, dice_enabled=dice))
        model = build(cfg_n)
        best, history = train(model, train_set, val_set, cfg_t)
        report = evaluate_dataset(best.to_model(), val_set, threshold=threshold)
        results.append(AblationRun(name, coord, side, dice, report.heads["fused"].f1, len(history.records)))
    return results


def format_tables(results):
    """Text rendering of the 2x2 coordinate/loss grid and the decoder comparison."""
    by = {(r.coord_enabled, r.side_layers_enabled, r.dice_enabled): r.f1 for r in results}
    lines = [
        "coordinate channels x loss (fused F1, side layers on)",
        f"{'':>10} {'bce':>10} {'bce+dice':>10}",
    ]
    for coord in (False, True):
        lines.append(f"{'with' if coord else 'without':>10} {by[(coord, True, False)]:>10.4f} {by[(coord, True, True)]:>10.4f}")
    lines += [
        "",
        "decoder (fused F1, coordinate channels on, bce+dice)",
        f"{'vanilla':>14} {by[(True, False, True)]:.4f}",
        f"{'side layers':>14} {by[(True, True, True)]:.4f}",
    ]
    return "\n".join(lines) + "\n"
