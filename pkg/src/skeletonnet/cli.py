"""Command-line entry point: ``skeletonnet {gen-synthetic,split,augment,train,predict,eval}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import argparse
from collections import Counter
import logging
from pathlib import Path
import sys

import numpy as np
from PIL import Image

from . import config as config_mod
from .dataset import (
    augment_rotations, binarize_pixels, drop_empty, load_directory, read_manifest,
    save_pair, split_by_object, write_manifest, read_gray,
)
from .errors import ConfigError, DataError, EmptyDatasetError, NumericalError, ShapeError
from .evaluation import (
    REPORT_HEADS, binarize, ensemble, evaluate_maps, predict_maps, search_ensemble_weight,
)
from .network import build, load_checkpoint
from .synthetic import generate_corpus
from .training import set_deterministic, train

log = logging.getLogger("skeletonnet")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config_args(p):
    p.add_argument("--config", help="TOML file with dotted keys, e.g. train.lr0 = 0.001")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one configuration key")


def _overrides(args, mapping):
    """Collect ``--set`` pairs followed by dedicated flags (flags win)."""
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = config_mod.parse_value(value.strip())
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    return out


def _resolve(args, mapping):
    return config_mod.resolve(args.config, _overrides(args, mapping))


def _load_split_pairs(cfg):
    data_dir = Path(cfg["data.dir"] or ".")
    manifest = Path(cfg["data.manifest"]) if cfg["data.manifest"] else data_dir / "split.tsv"
    if not data_dir.is_dir():
        raise ConfigError(f"data directory {data_dir} does not exist")
    if not manifest.is_file():
        raise ConfigError(f"manifest {manifest} does not exist (run `skeletonnet split` first)")
    split = read_manifest(manifest)
    return data_dir, split


def cmd_gen_synthetic(args):
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    if args.size < 16 or args.size % 16:
        raise ConfigError("--size must be a multiple of 16")
    out = Path(args.out)
    pairs = generate_corpus(args.count, args.size, args.seed)
    for shape, skel in pairs:
        save_pair(out, shape, skel)
    counts = Counter(s.object_class for s, _ in pairs)
    print(f"wrote {len(pairs)} pairs to {out}: " + ", ".join(f"{c}={n}" for c, n in sorted(counts.items())))


def cmd_split(args):
    if not 0 < args.ratio < 1:
        raise ConfigError(f"--ratio must lie strictly between 0 and 1, got {args.ratio}")
    pairs = load_directory(args.data)
    split = split_by_object(pairs, args.ratio, args.seed)
    out = Path(args.out) if args.out else Path(args.data) / "split.tsv"
    write_manifest(split, out)
    counts = Counter(s.object_class for s, _ in pairs)
    train_ids = set(split.train)
    for cls in sorted(counts):
        n_train = sum(1 for s, _ in pairs if s.object_class == cls and s.id in train_ids)
        print(f"{cls:>20} {counts[cls]:5d} images  train {n_train:4d}  val {counts[cls] - n_train:4d}")
    print(f"total {len(pairs)}: train {len(split.train)}, validation {len(split.validation)} -> {out}")


def cmd_augment(args):
    split = read_manifest(args.manifest)
    train_pairs = load_directory(args.data, split.train)
    val_pairs = load_directory(args.data, split.validation)
    if args.target < len(train_pairs):
        raise ConfigError(f"--target {args.target} is below the {len(train_pairs)} training pairs")
    augmented = augment_rotations(train_pairs, args.target, args.seed)
    out = Path(args.out)
    for shape, skel in augmented + val_pairs:
        save_pair(out, shape, skel)
    split.train = sorted(s.id for s, _ in augmented)
    write_manifest(split, out / "split.tsv")
    print(f"train {len(train_pairs)} -> {len(augmented)} pairs, validation {len(val_pairs)} -> {out}")


TRAIN_FLAGS = {
    "data": "data.dir", "manifest": "data.manifest", "out": "output.dir",
    "lr0": "train.lr0", "batch_size": "train.batch_size", "max_epochs": "train.max_epochs",
    "seed": "train.seed", "input_size": "net.input_size", "base_channels": "net.base_channels",
    "coordconv": "net.coord_enabled", "side_layers": "net.side_layers_enabled",
    "dice": "loss.dice_enabled", "augment_target": "data.augment_target",
}


def cmd_train(args):
    args.dice = None if args.loss is None else args.loss == "bce-dice"
    cfg = _resolve(args, TRAIN_FLAGS)
    net_cfg = config_mod.network_config(cfg)
    train_cfg = config_mod.train_config(cfg)
    data_dir, split = _load_split_pairs(cfg)
    out = Path(cfg["output.dir"])

    train_pairs = load_directory(data_dir, split.train)
    val_pairs = load_directory(data_dir, split.validation)
    if not train_pairs or not val_pairs:
        raise EmptyDatasetError("both train and validation partitions must be non-empty")
    size = train_pairs[0][0].pixels.shape
    if size != net_cfg.input_size:
        raise ConfigError(f"images are {size[0]}x{size[1]} but net.input_size is {net_cfg.input_size[0]}")
    if cfg["data.augment_target"]:
        train_pairs = augment_rotations(train_pairs, cfg["data.augment_target"], cfg["train.seed"])
    train_pairs = drop_empty(train_pairs)

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(config_mod.dump(cfg))
    model = build(net_cfg)
    try:
        best, history = train(model, train_pairs, val_pairs, train_cfg)
    except NumericalError as exc:
        if exc.history is not None:
            exc.history.to_csv(out / "history.csv")
        raise
    history.to_csv(out / "history.csv")

    best_model = best.to_model()
    maps = predict_maps(best_model, np.stack([s.pixels for s, _ in val_pairs]))
    gts = [k.pixels for _, k in val_pairs]
    weight = cfg["eval.ensemble_weight"]
    if weight == "auto":
        weight = search_ensemble_weight(maps, gts, cfg["eval.grid_step"], cfg["eval.threshold"])[0] if "side1" in maps[0] else 0.0
    report = evaluate_maps(maps, gts, cfg["eval.threshold"], weight, cfg["eval.aggregation"], [s.id for s, _ in val_pairs])
    best.save(out / "checkpoint.npz", extra={"ensemble_weight": weight, "best_epoch": history.best_epoch})
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    print(f"best epoch {history.best_epoch} of {len(history.records)}; outputs in {out}")


def _checkpoint_weight(cfg, extra):
    w = cfg["eval.ensemble_weight"]
    return float(extra.get("ensemble_weight", 0.5)) if w == "auto" else w


def _to_png(arr, path):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path)


def cmd_predict(args):
    cfg = _resolve(args, {"threshold": "eval.threshold", "weight": "eval.ensemble_weight"})
    model, extra = load_checkpoint(args.checkpoint)
    weight = _checkpoint_weight(cfg, extra)
    heads = args.heads or list(REPORT_HEADS)
    unknown = set(heads) - set(REPORT_HEADS)
    if unknown:
        raise ConfigError(f"unknown heads: {', '.join(sorted(unknown))}")

    paths = []
    for item in args.inputs:
        p = Path(item)
        paths.extend(sorted(p.glob("*.png")) if p.is_dir() else [p])
    if not paths:
        raise EmptyDatasetError("no input images")
    images = [binarize_pixels(read_gray(p)) for p in paths]
    if any(im.shape != model.config.input_size for im in images):
        raise ShapeError(f"all inputs must be {model.config.input_size}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = predict_maps(model, np.stack(images))
    for path, m in zip(paths, maps):
        m = dict(m)
        m["ensembled"] = ensemble(m["side1"], m["fused"], weight) if "side1" in m else m["fused"]
        for head in heads:
            if head not in m:
                continue
            _to_png(np.round(m[head] * 255.0), out / f"{path.stem}_{head}_prob.png")
            _to_png(binarize(m[head], cfg["eval.threshold"]) * 255, out / f"{path.stem}_{head}_bin.png")
    print(f"wrote predictions for {len(paths)} image(s) to {out}")


def cmd_eval(args):
    mapping = {"threshold": "eval.threshold", "weight": "eval.ensemble_weight",
               "data": "data.dir", "manifest": "data.manifest", "grid_step": "eval.grid_step",
               "aggregation": "eval.aggregation"}
    cfg = _resolve(args, mapping)
    model, extra = load_checkpoint(args.checkpoint)
    data_dir = Path(cfg["data.dir"] or ".")
    if args.partition == "all":
        pairs = load_directory(data_dir)
    else:
        _, split = _load_split_pairs(cfg)
        ids = split.validation if args.partition == "val" else split.train
        pairs = load_directory(data_dir, ids)
    if not pairs:
        raise EmptyDatasetError(f"no images in partition {args.partition!r}")
    if pairs[0][0].pixels.shape != model.config.input_size:
        raise ConfigError(f"checkpoint expects {model.config.input_size} images")

    maps = predict_maps(model, np.stack([s.pixels for s, _ in pairs]))
    gts = [k.pixels for _, k in pairs]
    weight = _checkpoint_weight(cfg, extra)
    if args.search_weight and "side1" in maps[0]:
        weight, best = search_ensemble_weight(maps, gts, cfg["eval.grid_step"], cfg["eval.threshold"])
        print(f"searched ensemble weight {weight:g} (mean F1 {best:.4f})")
    report = evaluate_maps(maps, gts, cfg["eval.threshold"], weight, cfg["eval.aggregation"], [s.id for s, _ in pairs])
    text = report.to_text()
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text)
    if args.per_image_csv:
        report.write_per_image_csv(args.per_image_csv)


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    keys = config_mod.describe_keys()
    parser = _Parser(prog="skeletonnet", description="Shape-to-skeleton network pipeline.",
                     epilog=keys, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    parser.add_argument("--deterministic", action="store_true",
                        help="single-threaded deterministic kernels (byte-identical reruns)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="write a synthetic shape/skeleton corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("split", help="object-wise train/validation split manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--ratio", type=float, default=0.8, help="train fraction per class (default 0.8, published)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="manifest path (default <data>/split.tsv)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="rotation-augment the train split into a new data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", type=int, required=True, help="number of training pairs after augmentation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a model", epilog=keys, formatter_class=fmt)
    _config_args(p)
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--lr0", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--augment-target", type=int)
    p.add_argument("--no-coordconv", dest="coordconv", action="store_const", const=False,
                   help="drop the coordinate channels")
    p.add_argument("--no-side-layers", dest="side_layers", action="store_const", const=False,
                   help="plain decoder with a single 1x1 output head")
    p.add_argument("--loss", choices=["bce-dice", "bce-only"], help="training objective (default bce-dice)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write probability and binary PNGs per head",
                       epilog=keys, formatter_class=fmt)
    _config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heads", action="extend", type=lambda v: v.split(","), metavar="HEAD[,HEAD]",
                   help=f"subset of {', '.join(REPORT_HEADS)} (repeatable or comma-separated)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--weight", type=float, help="side1 weight of the ensembled head")
    p.add_argument("inputs", nargs="+", help="PNG files or directories")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="per-head precision/recall/F1 report", epilog=keys, formatter_class=fmt)
    _config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data")
    p.add_argument("--manifest")
    p.add_argument("--partition", choices=["val", "train", "all"], default="val")
    p.add_argument("--threshold", type=float)
    p.add_argument("--weight", type=float)
    p.add_argument("--search-weight", action="store_true", help="grid-search the ensemble weight first")
    p.add_argument("--grid-step", type=float)
    p.add_argument("--aggregation", choices=["image", "global"])
    p.add_argument("--out", help="write the report here as well")
    p.add_argument("--per-image-csv")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.deterministic:
        set_deterministic(True)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
