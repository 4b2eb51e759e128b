"""Flat dotted-key run configuration (``train.lr0 = 0.001``) with TOML files and overrides.

Precedence: command-line flags > config file > defaults.
"""

import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .loss import LossConfig
from .network import NetworkConfig
from .training import TrainConfig

PUBLISHED = "published setting"

# key -> (default, help, note)
KEYS = {
    "net.input_size": (256, "square input side length, divisible by 16", ""),
    "net.base_channels": (16, "first encoder stage width; stages use base x {1,2,4,8}, bottleneck x16", ""),
    "net.se_ratio": (8, "squeeze-and-excitation reduction ratio", ""),
    "net.dilation_rate": (2, "dilation of the 3x3 fusion convolution", ""),
    "net.coord_enabled": (True, "append coordinate channels to the input", PUBLISHED),
    "net.coord_normalize": (True, "map coordinate channels to [-1, 1]", ""),
    "net.side_layers_enabled": (True, "four CS-SE side heads plus dilated fusion; false gives a plain decoder", PUBLISHED),
    "net.seed": (0, "parameter initialization seed", ""),
    "train.lr0": (0.001, "initial Adam learning rate", PUBLISHED),
    "train.plateau_patience": (10, "epochs without val-loss improvement before decaying the learning rate", PUBLISHED),
    "train.plateau_factor": (0.1, "learning-rate multiplier on plateau", PUBLISHED),
    "train.batch_size": (4, "mini-batch size", PUBLISHED),
    "train.max_epochs": (500, "maximum number of epochs", PUBLISHED),
    "train.early_stop_patience": (20, "epochs without val-loss improvement before stopping", ""),
    "train.min_improvement": (1e-4, "absolute val-loss decrease that counts as improvement", ""),
    "train.seed": (0, "shuffling seed", ""),
    "loss.epsilon": (1.0, "Dice smoothing constant", ""),
    "loss.clip_delta": (1e-7, "probability clipping bound for the log terms", ""),
    "loss.bce_reduction": ("mean", "cross-entropy reduction: mean or sum", ""),
    "loss.head_weights": ([1.0, 1.0, 1.0, 1.0, 1.0], "weights of side1..side4 and fused heads", ""),
    "loss.dice_enabled": (True, "add the Dice term to cross-entropy", PUBLISHED),
    "data.dir": ("", "dataset directory holding shapes/ and skeletons/", ""),
    "data.manifest": ("", "split manifest (<id>\\t<train|val> per line); default <data.dir>/split.tsv", ""),
    "data.augment_target": (0, "rotation-augment the train split to this many pairs (0 = off)", ""),
    "eval.threshold": (0.5, "binarization threshold", ""),
    "eval.ensemble_weight": ("auto", "side1 weight in the side1/fused average; auto = searched weight", ""),
    "eval.grid_step": (0.05, "ensemble weight search step", ""),
    "eval.aggregation": ("image", "F1 aggregation: image (mean of per-image) or global (pooled)", ""),
    "output.dir": ("runs/latest", "output directory", ""),
}


def defaults():
    return {k: (list(v[0]) if isinstance(v[0], list) else v[0]) for k, v in KEYS.items()}


def describe_keys():
    lines = ["configuration keys (set with --set key=value or a TOML --config file):"]
    for key, (default, text, note) in KEYS.items():
        suffix = f"; {note}" if note else ""
        lines.append(f"  {key} = {default!r}\n      {text}{suffix}")
    return "\n".join(lines)


def _flatten(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def _coerce(key, value):
    default = KEYS[key][0]
    if key == "eval.ensemble_weight":
        if value == "auto":
            return value
        return float(value)
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                return value.lower() == "true"
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


def parse_value(text):
    """Parse a TOML scalar/array literal; bare words stay strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_file(path):
    try:
        with open(path, "rb") as fh:
            return _flatten(tomllib.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve(file_path=None, overrides=None):
    """Merge defaults, an optional config file and overrides into a validated flat dict."""
    cfg = defaults()
    layers = []
    if file_path:
        layers.append(load_file(file_path))
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        for key, value in layer.items():
            if key not in KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            cfg[key] = _coerce(key, value)
    network_config(cfg)
    train_config(cfg)
    if not 0 < cfg["eval.threshold"] < 1:
        raise ConfigError("eval.threshold must lie in (0, 1)")
    if cfg["eval.aggregation"] not in ("image", "global"):
        raise ConfigError("eval.aggregation must be 'image' or 'global'")
    if cfg["eval.ensemble_weight"] != "auto" and not 0 <= cfg["eval.ensemble_weight"] <= 1:
        raise ConfigError("eval.ensemble_weight must lie in [0, 1]")
    if not 0 < cfg["eval.grid_step"] <= 1:
        raise ConfigError("eval.grid_step must lie in (0, 1]")
    return cfg


def network_config(cfg):
    size = cfg["net.input_size"]
    return NetworkConfig(
        input_size=(size, size),
        base_channels=cfg["net.base_channels"],
        se_ratio=cfg["net.se_ratio"],
        dilation_rate=cfg["net.dilation_rate"],
        coord_enabled=cfg["net.coord_enabled"],
        coord_normalize=cfg["net.coord_normalize"],
        side_layers_enabled=cfg["net.side_layers_enabled"],
        seed=cfg["net.seed"],
    ).validate()


def train_config(cfg):
    loss = LossConfig(
        epsilon=cfg["loss.epsilon"],
        clip_delta=cfg["loss.clip_delta"],
        bce_reduction=cfg["loss.bce_reduction"],
        head_weights=tuple(cfg["loss.head_weights"]),
        dice_enabled=cfg["loss.dice_enabled"],
    )
    return TrainConfig(
        lr0=cfg["train.lr0"],
        plateau_patience=cfg["train.plateau_patience"],
        plateau_factor=cfg["train.plateau_factor"],
        batch_size=cfg["train.batch_size"],
        max_epochs=cfg["train.max_epochs"],
        early_stop_patience=cfg["train.early_stop_patience"],
        min_improvement=cfg["train.min_improvement"],
        seed=cfg["train.seed"],
        loss=loss,
    ).validate()


def dump(cfg):
    """Render a flat config as TOML text with dotted keys."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    return "".join(f"{k} = {fmt(v)}\n" for k, v in cfg.items())
