"""
Ablations
=========

Coordinate channels on/off crossed with BCE vs BCE+Dice, plus the plain
decoder without side heads. Short schedule; expect a few minutes per run.
"""

from skeletonnet.ablation import format_tables, run_ablation
from skeletonnet.dataset import split_by_object
from skeletonnet.network import NetworkConfig
from skeletonnet.synthetic import generate_corpus
from skeletonnet.training import TrainConfig, set_deterministic

set_deterministic()
corpus = generate_corpus(200, size=64, seed=42)
split = split_by_object(corpus, 0.8, seed=0)
by_id = {s.id: (s, k) for s, k in corpus}
train_set = [by_id[i] for i in split.train]
val_set = [by_id[i] for i in split.validation]

results = run_ablation(
    train_set, val_set,
    NetworkConfig(input_size=(64, 64), base_channels=8),
    TrainConfig(max_epochs=10, early_stop_patience=10),
)
print(format_tables(results))
