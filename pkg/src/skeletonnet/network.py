"""SkeletonNet: coordinate channels, RS-block U-Net encoder/decoder, CS-SE side heads
and a dilated fusion head producing four side maps plus one fused map."""

from dataclasses import asdict, dataclass, field
import json

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import ConfigError, NumericalError, ShapeError
from .nnblocks import CSSEBlock, CoordChannels, RSBlock, init_weights

SIDE_NAMES = ("side1", "side2", "side3", "side4")
HEAD_NAMES = SIDE_NAMES + ("fused",)


@dataclass
class NetworkConfig:
    input_size: tuple = (256, 256)
    base_channels: int = 16
    se_ratio: int = 8
    dilation_rate: int = 2
    coord_enabled: bool = True
    coord_normalize: bool = True
    side_layers_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        self.input_size = tuple(int(v) for v in self.input_size)

    def validate(self):
        if len(self.input_size) != 2:
            raise ConfigError(f"input_size must be (H, W), got {self.input_size}")
        h, w = self.input_size
        if h < 16 or w < 16 or h % 16 or w % 16:
            raise ConfigError(f"input_size {self.input_size} must be divisible by 16")
        if self.base_channels < 4:
            raise ConfigError("base_channels must be >= 4")
        if self.dilation_rate < 1:
            raise ConfigError("dilation_rate must be >= 1")
        if self.se_ratio < 1:
            raise ConfigError("se_ratio must be >= 1")
        return self

    @property
    def encoder_widths(self):
        b = self.base_channels
        return [b, 2 * b, 4 * b, 8 * b]

    @property
    def bottleneck_width(self):
        return 16 * self.base_channels

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class PredictionSet:
    """Sigmoid maps at input resolution, each ``(B, 1, H, W)``.

    ``side`` is ordered finest decoder stage first (side1) and is empty for a
    vanilla-decoder model.
    """

    side: list
    fused: torch.Tensor
    side_logits: list = field(default_factory=list, repr=False)
    fused_logit: torch.Tensor = field(default=None, repr=False)

    def heads(self):
        out = dict(zip(SIDE_NAMES, self.side))
        out["fused"] = self.fused
        return out


class UpStage(nn.Module):
    def __init__(self, in_channels, skip_channels, se_ratio):
        super().__init__()
        self.up_conv = nn.Conv2d(in_channels, skip_channels, kernel_size=3, padding=1)
        self.block = RSBlock(2 * skip_channels, skip_channels, se_ratio)

    def forward(self, x, skip):
        x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
        x = self.up_conv(x)
        return self.block(torch.cat([x, skip], dim=1))


class SideHead(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.csse = CSSEBlock(channels)
        self.score = nn.Conv2d(channels, 1, kernel_size=1)

    def forward(self, x, size):
        logit = self.score(self.csse(x))
        if logit.shape[-2:] != size:
            logit = F.interpolate(logit, size=size, mode="bilinear", align_corners=False)
        return logit


class SkeletonNet(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config.validate()
        cfg = config
        widths = cfg.encoder_widths
        in_channels = 3 if cfg.coord_enabled else 1

        self.coords = CoordChannels(cfg.coord_normalize) if cfg.coord_enabled else None
        self.encoder = nn.ModuleList()
        for w in widths:
            self.encoder.append(RSBlock(in_channels, w, cfg.se_ratio))
            in_channels = w
        self.bottleneck = RSBlock(widths[-1], cfg.bottleneck_width, cfg.se_ratio)

        self.decoder = nn.ModuleList()
        in_channels = cfg.bottleneck_width
        for w in reversed(widths):
            self.decoder.append(UpStage(in_channels, w, cfg.se_ratio))
            in_channels = w

        if cfg.side_layers_enabled:
            # side_heads[0] sits on the full-resolution stage (side1)
            self.side_heads = nn.ModuleList(SideHead(w) for w in widths)
            self.fusion = nn.Conv2d(
                len(widths), 1, kernel_size=3,
                padding=cfg.dilation_rate, dilation=cfg.dilation_rate,
            )
            self.head = None
        else:
            self.side_heads = None
            self.fusion = None
            self.head = nn.Conv2d(widths[0], 1, kernel_size=1)

        generator = torch.Generator().manual_seed(cfg.seed)
        init_weights(self, generator)

    def forward(self, x):
        h, w = self.config.input_size
        if x.dim() != 4 or x.shape[1] != 1 or tuple(x.shape[-2:]) != (h, w):
            raise ShapeError(f"expected input (B, 1, {h}, {w}), got {tuple(x.shape)}")
        if self.coords is not None:
            x = self.coords(x)

        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)

        stages = []
        for up, skip in zip(self.decoder, reversed(skips)):
            x = up(x, skip)
            stages.append(x)
        # stages run coarse -> fine; side1 is the finest
        stages = stages[::-1]

        if self.side_heads is None:
            fused_logit = self.head(stages[0])
            side_logits = []
        else:
            side_logits = [head(s, (h, w)) for head, s in zip(self.side_heads, stages)]
            fused_logit = self.fusion(torch.cat(side_logits, dim=1))

        if not torch.isfinite(fused_logit).all() or not all(torch.isfinite(s).all() for s in side_logits):
            raise NumericalError("non-finite activations in forward pass")
        return PredictionSet(
            side=[torch.sigmoid(s) for s in side_logits],
            fused=torch.sigmoid(fused_logit),
            side_logits=side_logits,
            fused_logit=fused_logit,
        )


def build(config):
    """Instantiate a freshly initialized model (deterministic in ``config.seed``)."""
    if not isinstance(config, NetworkConfig):
        raise ConfigError("build() expects a NetworkConfig")
    return SkeletonNet(config)


def _se_params(c, ratio):
    hidden = max(1, c // ratio)
    return c * hidden + hidden + hidden * c + c


def _rs_params(cin, cout, ratio):
    n = 9 * cin * cout + 2 * cout + 9 * cout * cout + 2 * cout + _se_params(cout, ratio)
    if cin != cout:
        n += cin * cout + cout
    return n


def parameter_count(config):
    """Closed-form number of learnable parameters for ``config``."""
    config.validate()
    r = config.se_ratio
    widths = config.encoder_widths
    total = 0
    cin = 3 if config.coord_enabled else 1
    for w in widths:
        total += _rs_params(cin, w, r)
        cin = w
    total += _rs_params(widths[-1], config.bottleneck_width, r)
    cin = config.bottleneck_width
    for w in reversed(widths):
        total += 9 * cin * w + w + _rs_params(2 * w, w, r)
        cin = w
    if config.side_layers_enabled:
        total += sum((w + 1) + (w + 1) for w in widths)
        total += 9 * len(widths) + 1
    else:
        total += widths[0] + 1
    return total


def block_parameter_groups(model):
    """Map a block-type label to the list of ``(name, parameter)`` pairs of that type."""
    groups = {}
    for name, p in model.named_parameters():
        if ".se." in name:
            kind = "se"
        elif ".csse." in name:
            kind = "csse"
        elif name.startswith("side_heads") or name.startswith("head."):
            kind = "side_score"
        elif name.startswith("fusion"):
            kind = "fusion"
        elif "projection" in name:
            kind = "rs_projection"
        elif "up_conv" in name:
            kind = "up_conv"
        elif p.dim() == 4:
            kind = "rs_conv"
        else:
            kind = "rs_batchnorm"
        groups.setdefault(kind, []).append((name, p))
    return groups


def save_checkpoint(path, model, extra=None):
    """Write config, float32 parameters and BN buffers to a single ``.npz`` archive."""
    arrays = {}
    for name, t in model.state_dict().items():
        arr = t.detach().cpu().numpy()
        if arr.dtype.kind == "f":
            arr = arr.astype(np.float32)
        arrays["state/" + name] = np.ascontiguousarray(arr)
    meta = {"config": model.config.to_dict(), "seed": model.config.seed, "extra": extra or {}}
    arrays["__meta__"] = np.array(json.dumps(meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Return ``(model, extra)``; the model is in inference mode."""
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["__meta__"]))
            config = NetworkConfig.from_dict(meta["config"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: not a SkeletonNet checkpoint ({exc})") from exc
        state = {k[len("state/"):]: torch.from_numpy(data[k].copy()) for k in data.files if k.startswith("state/")}
    model = build(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise ConfigError(f"{path}: checkpoint does not match its config ({exc})") from exc
    model.eval()
    return model, meta.get("extra", {})
