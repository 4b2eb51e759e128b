"""Loading binary shape/skeleton pairs, object-wise splitting and rotation augmentation."""

from collections import defaultdict
from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import EmptyDatasetError, FormatError, InvalidTargetError, PairShapeError

log = logging.getLogger(__name__)

SHAPES_DIR = "shapes"
SKELETONS_DIR = "skeletons"


@dataclass
class ShapeMask:
    pixels: np.ndarray
    object_class: str
    id: str


@dataclass
class SkeletonMask:
    pixels: np.ndarray
    object_class: str
    id: str


@dataclass
class DatasetSplit:
    train: list
    validation: list
    seed: int


def class_from_id(pair_id):
    """``"l-shape-12"`` -> ``"l-shape"``: the class is everything before the last hyphen."""
    head, sep, _ = pair_id.rpartition("-")
    return head if sep else pair_id


def read_gray(path):
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "L":
                raise FormatError(f"{path}: expected 8-bit single-channel image, got mode {img.mode}")
            arr = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return arr


def binarize_pixels(arr):
    """Divide by 255 and re-binarize at 0.5."""
    return (np.asarray(arr, dtype=np.float32) / 255.0 >= 0.5).astype(np.float32)


def load_pair(shape_path, skeleton_path):
    shape_path, skeleton_path = Path(shape_path), Path(skeleton_path)
    shape = read_gray(shape_path)
    skel = read_gray(skeleton_path)
    if shape.shape != skel.shape:
        raise PairShapeError(f"{shape_path.name}: shape {shape.shape} vs skeleton {skel.shape}")
    pair_id = shape_path.stem
    cls = class_from_id(pair_id)
    return (
        ShapeMask(binarize_pixels(shape), cls, pair_id),
        SkeletonMask(binarize_pixels(skel), cls, pair_id),
    )


def load_directory(data_dir, ids=None):
    """Load every ``shapes/<id>.png`` with its ``skeletons/<id>.png``, sorted by id."""
    data_dir = Path(data_dir)
    shape_dir, skel_dir = data_dir / SHAPES_DIR, data_dir / SKELETONS_DIR
    if not shape_dir.is_dir() or not skel_dir.is_dir():
        raise FileNotFoundError(f"{data_dir} must contain {SHAPES_DIR}/ and {SKELETONS_DIR}/")
    if ids is None:
        ids = sorted(p.stem for p in shape_dir.glob("*.png"))
    missing = [i for i in ids if not (skel_dir / f"{i}.png").exists() or not (shape_dir / f"{i}.png").exists()]
    if missing:
        raise FileNotFoundError(f"missing shape/skeleton files for ids: {', '.join(missing)}")
    return [load_pair(shape_dir / f"{i}.png", skel_dir / f"{i}.png") for i in ids]


def save_pair(data_dir, shape, skeleton):
    data_dir = Path(data_dir)
    for sub, mask in ((SHAPES_DIR, shape), (SKELETONS_DIR, skeleton)):
        (data_dir / sub).mkdir(parents=True, exist_ok=True)
        Image.fromarray((mask.pixels > 0.5).astype(np.uint8) * 255, mode="L").save(data_dir / sub / f"{mask.id}.png")


def _n_train(n, ratio):
    # small slack so e.g. 0.29 * 100 floors to 29
    k = max(1, math.floor(ratio * n + 1e-9))
    return k if n == 1 else min(k, n - 1)


def split_by_object(pairs, ratio=0.8, seed=0):
    """Stratified split: within each class ``floor(ratio * n)`` images (at least one) go to train.

    Classes with two or more images always keep at least one validation image.
    """
    if not pairs:
        raise EmptyDatasetError("cannot split an empty dataset")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    by_class = defaultdict(list)
    for shape, _ in pairs:
        by_class[shape.object_class].append(shape.id)
    rng = np.random.default_rng(seed)
    train, val = [], []
    for cls in sorted(by_class):
        ids = sorted(by_class[cls])
        order = rng.permutation(len(ids))
        k = _n_train(len(ids), ratio)
        train.extend(ids[i] for i in order[:k])
        val.extend(ids[i] for i in order[k:])
    return DatasetSplit(train=sorted(train), validation=sorted(val), seed=seed)


def write_manifest(split, path):
    tags = {i: "train" for i in split.train}
    tags.update({i: "val" for i in split.validation})
    with open(path, "w", newline="\n") as fh:
        for pair_id in sorted(tags):
            fh.write(f"{pair_id}\t{tags[pair_id]}\n")


def read_manifest(path, seed=0):
    train, val = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                pair_id, tag = line.split("\t")
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected '<id>\\t<train|val>'") from None
            if tag not in ("train", "val"):
                raise FormatError(f"{path}:{lineno}: unknown partition {tag!r}")
            (train if tag == "train" else val).append(pair_id)
    return DatasetSplit(train=train, validation=val, seed=seed)


def rotate_mask(pixels, angle):
    """Nearest-neighbour rotation about the image centre; exposed pixels become 0."""
    if angle == 0:
        return pixels.copy()
    out = ndimage.rotate(pixels, angle, reshape=False, order=0, mode="constant", cval=0.0)
    return (out >= 0.5).astype(pixels.dtype)


def augment_rotations(train, target_count, seed=0):
    """Grow ``train`` to ``target_count`` pairs with randomly rotated copies.

    Extra copies are handed out round-robin over classes ordered by ascending
    image count, so the rarest objects are augmented first. Shape and skeleton
    share one angle drawn uniformly from [-45, 45] degrees.
    """
    if target_count < len(train):
        raise InvalidTargetError(f"target_count {target_count} is below the {len(train)} input pairs")
    out = list(train)
    extra = target_count - len(train)
    if extra == 0:
        return out
    if not train:
        raise EmptyDatasetError("nothing to augment")

    rng = np.random.default_rng(seed)
    by_class = defaultdict(list)
    for pair in train:
        by_class[pair[0].object_class].append(pair)
    classes = sorted(by_class, key=lambda c: (len(by_class[c]), c))
    pools = {c: [by_class[c][i] for i in rng.permutation(len(by_class[c]))] for c in classes}
    used = defaultdict(int)

    while extra:
        for cls in classes:
            if not extra:
                break
            shape, skel = pools[cls][used[cls] % len(pools[cls])]
            used[cls] += 1
            angle = float(rng.uniform(-45.0, 45.0))
            new_id = f"{shape.id}_rot{used[cls]:03d}"
            out.append((
                ShapeMask(rotate_mask(shape.pixels, angle), cls, new_id),
                SkeletonMask(rotate_mask(skel.pixels, angle), cls, new_id),
            ))
            extra -= 1
    return out


def drop_empty(pairs):
    """Remove pairs whose shape has no foreground, logging each one."""
    kept = []
    for shape, skel in pairs:
        if shape.pixels.any():
            kept.append((shape, skel))
        else:
            log.warning("excluding empty shape %s from training", shape.id)
    return kept


def to_arrays(pairs):
    """Stack pairs into ``(N, 1, H, W)`` float32 input and target arrays."""
    x = np.stack([s.pixels for s, _ in pairs])[:, None].astype(np.float32)
    y = np.stack([k.pixels for _, k in pairs])[:, None].astype(np.float32)
    return x, y
