"""Parametric synthetic corpus: filled shapes with skeletons from morphological thinning."""

import numpy as np
from skimage.draw import polygon
from skimage.morphology import skeletonize

from .dataset import ShapeMask, SkeletonMask

CLASSES = ("rect", "ellipse", "l-shape", "t-shape", "cross")
# uneven class frequencies, so the split and augmentation see imbalance
CLASS_WEIGHTS = (0.3, 0.25, 0.2, 0.15, 0.1)


def _rotate(points, angle, center):
    c, s = np.cos(angle), np.sin(angle)
    rel = points - center
    return np.stack([c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1]], axis=1) + center


def _outline(kind, rng, size):
    """Polygon vertices (row, col) centred on the origin, before rotation."""
    s = size
    if kind == "rect":
        h, w = rng.uniform(0.15, 0.35) * s, rng.uniform(0.3, 0.7) * s
        return np.array([[-h, -w], [-h, w], [h, w], [h, -w]]) / 2
    if kind == "ellipse":
        a, b = rng.uniform(0.25, 0.4) * s, rng.uniform(0.1, 0.22) * s
        t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        return np.stack([b * np.sin(t), a * np.cos(t)], axis=1)
    arm = rng.uniform(0.45, 0.65) * s
    t = rng.uniform(0.12, 0.2) * s
    if kind == "l-shape":
        pts = [[0, 0], [0, t], [arm - t, t], [arm - t, arm], [arm, arm], [arm, 0]]
        return np.array(pts, dtype=float) - arm / 2
    if kind == "t-shape":
        h = arm / 2
        pts = [[-h, -h], [-h, h], [-h + t, h], [-h + t, t / 2], [h, t / 2], [h, -t / 2], [-h + t, -t / 2], [-h + t, -h]]
        return np.array(pts, dtype=float)
    if kind == "cross":
        h, q = arm / 2, t / 2
        pts = [[-h, -q], [-h, q], [-q, q], [-q, h], [q, h], [q, q], [h, q], [h, -q], [q, -q], [q, -h], [-q, -h], [-q, -q]]
        return np.array(pts, dtype=float)
    raise ValueError(f"unknown shape class {kind!r}")


def draw_shape(kind, rng, size=64, margin=4):
    """Return a binary ``(size, size)`` float32 mask of one random ``kind`` shape."""
    pts = _outline(kind, rng, size)
    pts = _rotate(pts, rng.uniform(0, np.pi), np.zeros(2))
    lo, hi = pts.min(0), pts.max(0)
    span = hi - lo
    room = size - 2 * margin - span
    offset = margin - lo + rng.uniform(0, 1, 2) * np.maximum(room, 0)
    pts = pts + offset
    rr, cc = polygon(pts[:, 0], pts[:, 1], shape=(size, size))
    mask = np.zeros((size, size), dtype=np.float32)
    mask[rr, cc] = 1.0
    return mask


def skeleton_of(mask):
    return skeletonize(mask > 0.5).astype(np.float32)


def generate_corpus(n, size=64, seed=0):
    """``n`` shape/skeleton pairs with ids ``<class>-<index>``."""
    rng = np.random.default_rng(seed)
    counts = dict.fromkeys(CLASSES, 0)
    pairs = []
    while len(pairs) < n:
        kind = CLASSES[rng.choice(len(CLASSES), p=CLASS_WEIGHTS)]
        mask = draw_shape(kind, rng, size)
        skel = skeleton_of(mask)
        if mask.sum() < 20 or skel.sum() == 0:
            continue
        pair_id = f"{kind}-{counts[kind]:04d}"
        counts[kind] += 1
        pairs.append((ShapeMask(mask, kind, pair_id), SkeletonMask(skel, kind, pair_id)))
    return pairs
