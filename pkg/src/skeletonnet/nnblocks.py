"""Building blocks: coordinate channels, SE and CS-SE gating, residual squeezed block.

All modules operate on batched ``(B, C, H, W)`` tensors and preserve ``(H, W)``.
"""

import torch
from torch import nn
import torch.nn.functional as F


def coord_channels(height, width, dtype=torch.float32):
    """Return the row-index and column-index channels, each shaped ``(1, H, W)``.

    ``ci[0, r, c] == r`` and ``cj[0, r, c] == c``.
    """
    rows = torch.arange(height, dtype=dtype)
    cols = torch.arange(width, dtype=dtype)
    ci = rows.view(1, height, 1).expand(1, height, width).clone()
    cj = cols.view(1, 1, width).expand(1, height, width).clone()
    return ci, cj


def _to_unit_range(channel, extent):
    if extent == 1:
        return torch.zeros_like(channel)
    return 2.0 * channel / (extent - 1) - 1.0


def append_coords(x, normalize=True):
    """Concatenate the two coordinate channels after the existing channels of ``x``.

    Accepts ``(C, H, W)`` or ``(B, C, H, W)``. With ``normalize`` the index
    channels are mapped affinely onto [-1, 1].
    """
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    batch, _, height, width = x.shape
    ci, cj = coord_channels(height, width, dtype=x.dtype)
    if normalize:
        ci = _to_unit_range(ci, height)
        cj = _to_unit_range(cj, width)
    coords = torch.cat([ci, cj], dim=0).to(x.device)
    out = torch.cat([x, coords.unsqueeze(0).expand(batch, -1, -1, -1)], dim=1)
    return out.squeeze(0) if squeeze else out


class CoordChannels(nn.Module):
    def __init__(self, normalize=True):
        super().__init__()
        self.normalize = normalize

    def forward(self, x):
        return append_coords(x, self.normalize)


class SEBlock(nn.Module):
    """Channel squeeze-and-excitation: global average pool, bottleneck MLP, sigmoid gates."""

    def __init__(self, channels, ratio=8):
        super().__init__()
        hidden = max(1, channels // ratio)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gate(self, x):
        pooled = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(pooled))))

    def forward(self, x):
        return x * self.gate(x)[:, :, None, None]


class CSSEBlock(nn.Module):
    """Channel squeeze, spatial excitation: one sigmoid gate per pixel shared by all channels."""

    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, kernel_size=1, bias=True)

    def gate(self, x):
        return torch.sigmoid(self.conv(x))

    def forward(self, x):
        return x * self.gate(x)


def conv_bn_relu(in_channels, out_channels):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1, bias=False),
        nn.BatchNorm2d(out_channels, eps=1e-5, momentum=0.1),
        nn.ReLU(inplace=False),
    )


class RSBlock(nn.Module):
    """Residual squeezed block.

    ``out = relu(identity(x) + se(conv_path(x)))`` where the conv path is two
    3x3 conv + BN + ReLU layers and the identity is a 1x1 projection when the
    channel count changes.
    """

    def __init__(self, in_channels, out_channels, se_ratio=8):
        super().__init__()
        self.conv_path = nn.Sequential(
            conv_bn_relu(in_channels, out_channels),
            conv_bn_relu(out_channels, out_channels),
        )
        self.se = SEBlock(out_channels, se_ratio)
        if in_channels == out_channels:
            self.projection = None
        else:
            self.projection = nn.Conv2d(in_channels, out_channels, kernel_size=1, bias=True)

    def forward(self, x):
        identity = x if self.projection is None else self.projection(x)
        return F.relu(identity + self.se(self.conv_path(x)))


def init_weights(module, generator=None):
    """He-uniform weights for conv/linear layers, zero biases, unit BN gain."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = nn.init._calculate_correct_fan(m.weight, "fan_in")
            bound = (6.0 / fan_in) ** 0.5
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
            m.reset_running_stats()
