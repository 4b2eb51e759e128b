"""
Training on synthetic shapes
============================

Generates a small corpus of filled shapes with thinning skeletons, splits it
object-wise, augments the training part with rotations, trains a small
network for a few epochs and prints the per-head report.
"""

import logging

import numpy as np

from skeletonnet.dataset import augment_rotations, split_by_object
from skeletonnet.evaluation import evaluate_dataset, predict_maps, search_ensemble_weight
from skeletonnet.network import NetworkConfig, build
from skeletonnet.synthetic import generate_corpus
from skeletonnet.training import TrainConfig, set_deterministic, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
set_deterministic()

# %% Data
corpus = generate_corpus(120, size=64, seed=0)
split = split_by_object(corpus, 0.8, seed=0)
by_id = {s.id: (s, k) for s, k in corpus}
train_set = augment_rotations([by_id[i] for i in split.train], 120, seed=0)
val_set = [by_id[i] for i in split.validation]
print(len(train_set), "training pairs,", len(val_set), "validation pairs")

# %% Model and training
model = build(NetworkConfig(input_size=(64, 64), base_channels=8))
best, history = train(model, train_set, val_set, TrainConfig(max_epochs=10))
print("best epoch", history.best_epoch)

# %% Evaluation with a searched ensemble weight
trained = best.to_model()
maps = predict_maps(trained, np.stack([s.pixels for s, _ in val_set]))
w, _ = search_ensemble_weight(maps, [k.pixels for _, k in val_set], grid_step=0.05)
print(evaluate_dataset(trained, val_set, threshold=0.5, w=w).to_text())
