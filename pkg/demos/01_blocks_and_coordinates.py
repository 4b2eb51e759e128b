"""
Coordinate channels and gating blocks
=====================================

The network sees its input together with two index channels, and every
encoder/decoder stage is a residual block whose convolutional branch is
re-weighted channel by channel. The side heads add a per-pixel gate.
"""

import torch

from skeletonnet.nnblocks import CSSEBlock, RSBlock, SEBlock, append_coords, coord_channels

# %% Row/column index channels: row r holds r, column c holds c
ci, cj = coord_channels(3, 4)
print(ci[0])
print(cj[0])

# %% Inside the network the indices are rescaled to [-1, 1]
x = torch.zeros(1, 1, 5, 5)
print(append_coords(x, normalize=True)[0, 1])

# %% Channel gate: one factor in (0, 1) per channel
torch.manual_seed(0)
feats = torch.rand(1, 8, 16, 16)
se = SEBlock(8, ratio=4)
print("SE gates:", se.gate(feats).detach().numpy().round(3))

# %% Spatial gate: one factor per pixel, shared by all channels
cs = CSSEBlock(8)
print("CS-SE gate map shape:", tuple(cs.gate(feats).shape))

# %% Residual squeezed block keeps the spatial size
rs = RSBlock(8, 16)
print(tuple(rs(feats).shape))
