"""Pixel metrics, side/fused ensembling and per-head dataset reports."""

import csv
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import EmptyDatasetError, ShapeError
from .network import HEAD_NAMES

REPORT_HEADS = HEAD_NAMES + ("ensembled",)


def binarize(p, threshold=0.5):
    """1 where ``p >= threshold``, else 0 (uint8)."""
    return (np.asarray(p) >= threshold).astype(np.uint8)


def confusion(pred, gt):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = pred.size - tp - fp - fn
    return tp, fp, fn, tn


def precision_recall_f1(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1_score(pred, gt):
    tp, fp, fn, _ = confusion(pred, gt)
    return precision_recall_f1(tp, fp, fn)[2]


def ensemble(side1, fused, w):
    """Weighted average ``w * side1 + (1 - w) * fused``.

    Endpoints return the corresponding input exactly, and the result never
    leaves the element-wise hull of the two inputs.
    """
    side1 = np.asarray(side1)
    fused = np.asarray(fused)
    if side1.shape != fused.shape:
        raise ShapeError(f"side1 {side1.shape} vs fused {fused.shape}")
    if w == 1:
        return side1.copy()
    if w == 0:
        return fused.copy()
    out = fused + w * (side1 - fused)
    return np.clip(out, np.minimum(side1, fused), np.maximum(side1, fused))


def weight_grid(grid_step):
    if not 0 < grid_step <= 1:
        raise ValueError("grid_step must lie in (0, 1]")
    n = int(np.floor(1.0 / grid_step + 1e-9))
    ws = [round(i * grid_step, 10) for i in range(n + 1)]
    if ws[-1] < 1.0:
        ws.append(1.0)
    return ws


def _ensembled(maps, w):
    if "side1" not in maps:
        return maps["fused"]
    return ensemble(maps["side1"], maps["fused"], w)


def search_ensemble_weight(preds, gts, grid_step=0.05, threshold=0.5):
    """Grid-search the side1/fused weight maximizing mean per-image F1.

    ``preds`` is a list of head-name -> probability map dicts. Ties resolve to
    the smaller weight. Returns ``(w, f1)``.
    """
    if not preds:
        raise EmptyDatasetError("ensemble weight search needs at least one image")
    best_w, best_f1 = None, -1.0
    for w in weight_grid(grid_step):
        score = float(np.mean([f1_score(binarize(_ensembled(m, w), threshold), g) for m, g in zip(preds, gts)]))
        if score > best_f1:
            best_w, best_f1 = w, score
    return best_w, best_f1


@dataclass
class HeadScore:
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    heads: dict
    n_images: int
    threshold: float
    ensemble_weight: float
    aggregation: str = "image"
    per_image: list = field(default_factory=list, repr=False)

    def to_text(self):
        lines = [
            f"n_images = {self.n_images}",
            f"threshold = {self.threshold:g}",
            f"ensemble_weight = {self.ensemble_weight:g}",
            f"aggregation = {self.aggregation}",
        ]
        for name, s in self.heads.items():
            lines.append(f"{name}.precision = {s.precision:.6f}")
            lines.append(f"{name}.recall = {s.recall:.6f}")
            lines.append(f"{name}.f1 = {s.f1:.6f}")
        return "\n".join(lines) + "\n"

    def write_per_image_csv(self, path):
        names = list(self.heads)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + [f"f1_{n}" for n in names])
            for row in self.per_image:
                writer.writerow([row["id"]] + [f"{row[n]:.6f}" for n in names])


def predict_maps(model, images, batch_size=8):
    """Run ``model`` in inference mode; return one head-name -> ``(H, W)`` array dict per image."""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 3:
        images = images[:, None]
    out = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            x = torch.from_numpy(images[start:start + batch_size]).to(dtype)
            heads = model(x).heads()
            for i in range(x.shape[0]):
                out.append({k: v[i, 0].cpu().numpy().astype(np.float64) for k, v in heads.items()})
    model.train(was_training)
    return out


def evaluate_maps(maps, gts, threshold=0.5, w=0.5, aggregation="image", ids=None):
    """Score precomputed head maps against ground-truth skeletons.

    ``aggregation="image"`` averages per-image metrics; ``"global"`` pools the
    confusion counts over the whole set first.
    """
    if not maps:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    if aggregation not in ("image", "global"):
        raise ValueError("aggregation must be 'image' or 'global'")
    heads = [h for h in HEAD_NAMES if h in maps[0]] + ["ensembled"]
    ids = ids or [str(i) for i in range(len(maps))]
    scores = {h: [] for h in heads}
    counts = {h: np.zeros(3, dtype=np.int64) for h in heads}
    per_image = []
    for pair_id, m, gt in zip(ids, maps, gts):
        row = {"id": pair_id}
        probs = dict(m)
        probs["ensembled"] = _ensembled(m, w)
        for h in heads:
            tp, fp, fn, _ = confusion(binarize(probs[h], threshold), gt)
            counts[h] += (tp, fp, fn)
            s = precision_recall_f1(tp, fp, fn)
            scores[h].append(s)
            row[h] = s[2]
        per_image.append(row)

    report_heads = {}
    for h in heads:
        if aggregation == "image":
            p, r, f = np.mean(np.array(scores[h]), axis=0)
        else:
            p, r, f = precision_recall_f1(*(int(c) for c in counts[h]))
        report_heads[h] = HeadScore(float(p), float(r), float(f))
    return MetricsReport(report_heads, len(maps), threshold, w, aggregation, per_image)


def evaluate_dataset(model, pairs, threshold=0.5, w=0.5, aggregation="image", batch_size=8):
    if not pairs:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    images = np.stack([s.pixels for s, _ in pairs])
    gts = [k.pixels for _, k in pairs]
    maps = predict_maps(model, images, batch_size)
    return evaluate_maps(maps, gts, threshold, w, aggregation, ids=[s.id for s, _ in pairs])
