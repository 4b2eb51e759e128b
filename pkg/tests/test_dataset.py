import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image
from scipy import ndimage

from skeletonnet.dataset import (
    augment_rotations, class_from_id, drop_empty, load_directory, load_pair, read_manifest,
    rotate_mask, save_pair, split_by_object, write_manifest,
)
from skeletonnet.errors import EmptyDatasetError, FormatError, InvalidTargetError, PairShapeError
from skeletonnet.synthetic import generate_corpus

from conftest import make_pairs

# 89 classes ranging from 1 to 58 images, 1219 in total
PAPER_LIKE_COUNTS = [1, 58] + [5 * u for u in [1] * 19 + [2] * 31 + [3] * 20 + [4] * 10 + [6] * 4 + [8] * 2 + [11]]


def _png(path, arr, mode="L"):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode=mode).save(path)


def test_load_pair_normalizes_and_binarizes(tmp_path):
    shape = np.array([[0, 255, 128, 127]] * 8, dtype=np.uint8)
    shape = np.tile(shape, (1, 2))
    _png(tmp_path / "cup-3.png", shape)
    _png(tmp_path / "cup-3s.png", np.zeros((8, 8)))
    s, k = load_pair(tmp_path / "cup-3.png", tmp_path / "cup-3s.png")
    # 255 -> 1, 0 -> 0, 128/255 = 0.50196 -> 1, 127/255 = 0.498 -> 0
    assert s.pixels[0, :4].tolist() == [0.0, 1.0, 1.0, 0.0]
    assert set(np.unique(s.pixels)) <= {0.0, 1.0}
    assert s.object_class == "cup" and s.id == "cup-3"
    assert not k.pixels.any()


def test_load_pair_accepts_empty_shape(tmp_path):
    _png(tmp_path / "a-1.png", np.zeros((8, 8)))
    _png(tmp_path / "b.png", np.zeros((8, 8)))
    s, _ = load_pair(tmp_path / "a-1.png", tmp_path / "b.png")
    assert s.pixels.sum() == 0
    assert drop_empty([(s, _)]) == []


def test_load_pair_errors(tmp_path):
    _png(tmp_path / "a-1.png", np.zeros((8, 8)))
    _png(tmp_path / "b-1.png", np.zeros((8, 16)))
    with pytest.raises(PairShapeError):
        load_pair(tmp_path / "a-1.png", tmp_path / "b-1.png")
    _png(tmp_path / "rgb-1.png", np.zeros((8, 8, 3)), mode="RGB")
    with pytest.raises(FormatError):
        load_pair(tmp_path / "rgb-1.png", tmp_path / "a-1.png")
    (tmp_path / "junk-1.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        load_pair(tmp_path / "junk-1.png", tmp_path / "a-1.png")


@pytest.mark.parametrize("pid,cls", [("l-shape-12", "l-shape"), ("cup-3", "cup"), ("rect-0001_rot004", "rect"), ("x", "x")])
def test_class_from_id(pid, cls):
    assert class_from_id(pid) == cls


def test_directory_round_trip(tmp_path):
    pairs = generate_corpus(5, 32, seed=0)
    for s, k in pairs:
        save_pair(tmp_path, s, k)
    loaded = load_directory(tmp_path)
    assert [s.id for s, _ in loaded] == sorted(s.id for s, _ in pairs)
    by_id = {s.id: (s, k) for s, k in pairs}
    for s, k in loaded:
        np.testing.assert_array_equal(s.pixels, by_id[s.id][0].pixels)
        np.testing.assert_array_equal(k.pixels, by_id[s.id][1].pixels)


def test_split_paper_counts():
    counts = {f"obj{i:02d}": n for i, n in enumerate(PAPER_LIKE_COUNTS)}
    assert len(counts) == 89 and sum(counts.values()) == 1219
    split = split_by_object(make_pairs(counts, size=8), 0.8, seed=1)
    assert (len(split.train), len(split.validation)) == (975, 244)


def test_split_rules():
    pairs = make_pairs({"solo": 1, "ten": 10, "two": 2})
    split = split_by_object(pairs, 0.8, seed=4)
    train_cls = [class_from_id(i) for i in split.train]
    val_cls = [class_from_id(i) for i in split.validation]
    assert train_cls.count("solo") == 1 and "solo" not in val_cls
    assert train_cls.count("ten") == 8 and val_cls.count("ten") == 2
    assert train_cls.count("two") == 1 and val_cls.count("two") == 1
    assert not set(split.train) & set(split.validation)
    assert set(split.train) | set(split.validation) == {s.id for s, _ in pairs}


def test_split_deterministic_and_errors():
    pairs = make_pairs({"a": 7, "b": 13, "c": 3})
    assert split_by_object(pairs, 0.8, 9) == split_by_object(pairs, 0.8, 9)
    with pytest.raises(EmptyDatasetError):
        split_by_object([], 0.8, 0)
    with pytest.raises(ValueError):
        split_by_object(pairs, 1.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdefgh"), st.integers(1, 30), min_size=1), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_invariants(counts, ratio, seed):
    split = split_by_object(make_pairs(counts), ratio, seed)
    train_cls = [class_from_id(i) for i in split.train]
    val_cls = [class_from_id(i) for i in split.validation]
    for cls, n in counts.items():
        assert cls in train_cls
        if n >= 2:
            assert cls in val_cls
        else:
            assert cls not in val_cls
        expected = 1 if n == 1 else min(n - 1, max(1, math.floor(ratio * n + 1e-9)))
        assert train_cls.count(cls) == expected


def test_manifest_round_trip(tmp_path):
    split = split_by_object(make_pairs({"a": 5, "b": 3}), 0.8, 0)
    write_manifest(split, tmp_path / "m.tsv")
    text = (tmp_path / "m.tsv").read_text()
    assert all(line.split("\t")[1] in ("train", "val") for line in text.splitlines())
    back = read_manifest(tmp_path / "m.tsv")
    assert sorted(back.train) == split.train and sorted(back.validation) == split.validation
    (tmp_path / "bad.tsv").write_text("a-1 train\n")
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "bad.tsv")


def test_augment_counts_and_originals():
    pairs = make_pairs({"rare": 1, "mid": 3, "common": 8}, size=16)
    out = augment_rotations(pairs, 20, seed=0)
    assert len(out) == 20
    assert out[:12] == pairs
    extra_cls = [s.object_class for s, _ in out[12:]]
    # round-robin from the rarest class: rare, mid, common, rare, ...
    assert extra_cls == ["rare", "mid", "common"] * 2 + ["rare", "mid"]
    for s, k in out[12:]:
        assert set(np.unique(s.pixels)) <= {0.0, 1.0}
        assert s.id == k.id and class_from_id(s.id) == s.object_class


def test_augment_noop_and_errors():
    pairs = make_pairs({"a": 3})
    assert augment_rotations(pairs, 3, seed=0) == pairs
    with pytest.raises(InvalidTargetError):
        augment_rotations(pairs, 2, seed=0)


def test_augment_deterministic():
    pairs = generate_corpus(6, 32, seed=1)
    a = augment_rotations(pairs, 15, seed=5)
    b = augment_rotations(pairs, 15, seed=5)
    for (s1, k1), (s2, k2) in zip(a, b):
        assert s1.id == s2.id
        np.testing.assert_array_equal(s1.pixels, s2.pixels)
        np.testing.assert_array_equal(k1.pixels, k2.pixels)


def test_rotation_identity_at_zero():
    rng = np.random.default_rng(0)
    mask = (rng.random((32, 32)) > 0.5).astype(np.float32)
    np.testing.assert_array_equal(rotate_mask(mask, 0.0), mask)
    # the general path agrees with the identity at 0 degrees too
    np.testing.assert_array_equal(ndimage.rotate(mask, 0.0, reshape=False, order=0), mask)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-45, 45))
def test_rotation_preserves_area(seed, angle):
    (shape, _), = generate_corpus(1, 64, seed=seed)
    rotated = rotate_mask(shape.pixels, angle)
    # shapes are drawn inside a 4 px margin; only test those that fit after rotation
    centre = np.array([31.5, 31.5])
    rr, cc = np.nonzero(shape.pixels)
    radius = np.sqrt((rr - centre[0]) ** 2 + (cc - centre[1]) ** 2).max()
    if radius <= 31:
        area = shape.pixels.sum()
        assert abs(rotated.sum() - area) / area < 0.15


def test_augmented_skeleton_inside_dilated_shape():
    pairs = generate_corpus(30, 64, seed=2)
    out = augment_rotations(pairs, 90, seed=3)
    disk = ndimage.generate_binary_structure(2, 1)
    disk = ndimage.iterate_structure(disk, 2)
    for s, k in out:
        dilated = ndimage.binary_dilation(s.pixels > 0, structure=disk)
        assert not np.any((k.pixels > 0) & ~dilated), s.id
