"""Skeleton extraction from binary shape masks with a deeply supervised U-Net."""

from .dataset import (
    DatasetSplit, ShapeMask, SkeletonMask, augment_rotations, load_pair, split_by_object,
)
from .evaluation import (
    MetricsReport, binarize, confusion, ensemble, evaluate_dataset, f1_score, search_ensemble_weight,
)
from .loss import LossConfig, bce, combined_loss, dice_loss, multi_head_loss
from .network import NetworkConfig, PredictionSet, build, load_checkpoint, parameter_count, save_checkpoint
from .nnblocks import CSSEBlock, RSBlock, SEBlock, append_coords, coord_channels
from .training import TrainConfig, TrainHistory, gradient_check, overfit_single_batch, train

__version__ = "0.1.0"
