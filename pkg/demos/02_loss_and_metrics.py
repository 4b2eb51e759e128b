"""
Loss and pixel metrics
======================

Cross-entropy plus Dice on probability maps, and exact-pixel F1 on
binarized predictions, including the side1/fused weighted ensemble.
"""

import numpy as np
import torch

from skeletonnet.evaluation import binarize, ensemble, f1_score, search_ensemble_weight
from skeletonnet.loss import LossConfig, bce, combined_loss, dice_loss

# %% Worked numbers
y = torch.tensor([1.0, 0.0], dtype=torch.float64)
p = torch.tensor([0.5, 0.5], dtype=torch.float64)
cfg = LossConfig(bce_reduction="sum")
print("bce", bce(y, p, cfg).item())  # 2 ln 2
print("dice", dice_loss(y, p, 1.0).item())  # 1/3
print("combined", combined_loss(y, p, cfg).item())

# %% F1 on a toy skeleton
gt = np.zeros((8, 8), dtype=np.uint8)
gt[4, 1:7] = 1
pred = gt.copy()
pred[4, 6] = 0
pred[3, 3] = 1
print("F1", f1_score(pred, gt))

# %% Ensembling two noisy heads and searching the weight
rng = np.random.default_rng(0)
side1 = np.clip(gt * 0.6 + rng.normal(0.2, 0.2, gt.shape), 0, 1)
fused = np.clip(gt * 0.6 + rng.normal(0.2, 0.2, gt.shape), 0, 1)
print("w=0.5 F1", f1_score(binarize(ensemble(side1, fused, 0.5)), gt))
print("search", search_ensemble_weight([{"side1": side1, "fused": fused}], [gt], grid_step=0.1))
