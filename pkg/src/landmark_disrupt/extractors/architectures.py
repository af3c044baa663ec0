"""Three miniature heat-map regressors.

All use smooth activations (SiLU) and no max-pooling so that the input
gradient is well defined everywhere and matches finite differences.
"""

from __future__ import annotations

import torch
from torch import nn
import torch.nn.functional as F

ARCHITECTURES = ("hourglass-mini", "hires-parallel-mini", "encdec-mini")


def conv_block(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.SiLU(),
    )


class Stem(nn.Module):
    """Two stride-2 convolutions: input -> stride-4 feature map."""

    def __init__(self, width):
        super().__init__()
        self.body = nn.Sequential(conv_block(3, width // 2, 2), conv_block(width // 2, width, 2))

    def forward(self, x):
        return self.body(x)


class HourglassMini(nn.Module):
    """Single hourglass: encoder-decoder with a skip branch at each scale."""

    def __init__(self, k, width=32, depth=2):
        super().__init__()
        self.stem = Stem(width)
        self.down = nn.ModuleList(conv_block(width, width, 2) for _ in range(depth))
        self.skip = nn.ModuleList(conv_block(width, width) for _ in range(depth))
        self.up = nn.ModuleList(conv_block(width, width) for _ in range(depth))
        self.bottleneck = conv_block(width, width)
        self.head = nn.Sequential(conv_block(width, width), nn.Conv2d(width, k, 1))

    def forward(self, x):
        x = self.stem(x)
        skips = []
        for down, skip in zip(self.down, self.skip):
            skips.append(skip(x))
            x = down(x)
        x = self.bottleneck(x)
        for up, s in zip(self.up, reversed(skips)):
            x = F.interpolate(x, size=s.shape[-2:], mode="bilinear", align_corners=False)
            x = up(x) + s
        return self.head(x)


class HiResParallelMini(nn.Module):
    """High- and low-resolution branches with repeated exchange between them."""

    def __init__(self, k, width=24, low_width=40, stages=3):
        super().__init__()
        self.stem = Stem(width)
        self.to_low = conv_block(width, low_width, 2)
        self.high = nn.ModuleList(conv_block(width, width) for _ in range(stages))
        self.low = nn.ModuleList(conv_block(low_width, low_width) for _ in range(stages))
        self.low_to_high = nn.ModuleList(
            nn.Sequential(nn.Conv2d(low_width, width, 1, bias=False), nn.BatchNorm2d(width))
            for _ in range(stages)
        )
        self.high_to_low = nn.ModuleList(
            nn.Sequential(nn.Conv2d(width, low_width, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(low_width))
            for _ in range(stages)
        )
        self.head = nn.Conv2d(width, k, 1)

    def forward(self, x):
        hi = self.stem(x)
        lo = self.to_low(hi)
        for h, l, l2h, h2l in zip(self.high, self.low, self.low_to_high, self.high_to_low):
            hi, lo = h(hi), l(lo)
            up = F.interpolate(l2h(lo), size=hi.shape[-2:], mode="bilinear", align_corners=False)
            hi, lo = F.silu(hi + up), F.silu(lo + h2l(hi))
        return self.head(hi)


class EncDecMini(nn.Module):
    """Plain strided encoder followed by an upsampling decoder, no skips."""

    def __init__(self, k, widths=(16, 32, 48, 64)):
        super().__init__()
        layers, cin = [], 3
        for w in widths:
            layers.append(conv_block(cin, w, 2))
            cin = w
        self.encoder = nn.Sequential(*layers)
        self.decoder = nn.ModuleList([conv_block(widths[3], widths[2]), conv_block(widths[2], widths[1])])
        self.head = nn.Sequential(conv_block(widths[1], widths[1]), nn.Conv2d(widths[1], k, 1))

    def forward(self, x):
        x = self.encoder(x)
        for block in self.decoder:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = block(x)
        return self.head(x)


def build_network(arch: str, k: int) -> nn.Module:
    if arch == "hourglass-mini":
        return HourglassMini(k)
    if arch == "hires-parallel-mini":
        return HiResParallelMini(k)
    if arch == "encdec-mini":
        return EncDecMini(k)
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def graph_fingerprint(net: nn.Module) -> tuple:
    """Ordered (module type, weight shape) pairs of every parametrised layer."""
    out = []
    for name, mod in net.named_modules():
        w = getattr(mod, "weight", None)
        if isinstance(w, torch.Tensor):
            out.append((type(mod).__name__, tuple(w.shape)))
    return tuple(out)
