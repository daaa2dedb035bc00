"""Convolutional building blocks shared by the sub-networks."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import InvalidArgumentError

MAX_NORM_GROUPS = 8


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(MAX_NORM_GROUPS, channels), channels, affine=True)


def fit_depth(size: int, num_blocks: int) -> int:
    """Return the deepest hourglass not exceeding num_blocks that fits a spatial side.

    Every level halves the side, which must stay even and reach at least 2.

    Raises:
        InvalidArgumentError: If not even one level fits.
    """
    depth = 0
    side = size
    while depth < num_blocks and side % 2 == 0 and side // 2 >= 2:
        side //= 2
        depth += 1
    if depth == 0:
        raise InvalidArgumentError(f"Spatial size {size} is too small for an hourglass")
    return depth


class DownBlock2d(nn.Module):
    """Conv, norm, ReLU and 2x average pooling."""

    def __init__(self, in_features: int, out_features: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_features, out_features, kernel_size=3, padding=1)
        self.norm = _norm(out_features)
        self.pool = nn.AvgPool2d(kernel_size=2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(F.relu(self.norm(self.conv(x))))


class UpBlock2d(nn.Module):
    """Nearest 2x upsampling followed by conv, norm and ReLU."""

    def __init__(self, in_features: int, out_features: int) -> None:
        super().__init__()
        self.conv = nn.Conv2d(in_features, out_features, kernel_size=3, padding=1)
        self.norm = _norm(out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.interpolate(x, scale_factor=2.0)
        return F.relu(self.norm(self.conv(out)))


class SameBlock2d(nn.Module):
    """Resolution-preserving conv, norm and ReLU."""

    def __init__(self, in_features: int, out_features: int, kernel_size: int = 3) -> None:
        super().__init__()
        self.conv = nn.Conv2d(
            in_features, out_features, kernel_size=kernel_size, padding=kernel_size // 2
        )
        self.norm = _norm(out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.relu(self.norm(self.conv(x)))


class ResBlock2d(nn.Module):
    """Pre-activation residual block that preserves shape."""

    def __init__(self, features: int) -> None:
        super().__init__()
        self.norm1 = _norm(features)
        self.conv1 = nn.Conv2d(features, features, kernel_size=3, padding=1)
        self.norm2 = _norm(features)
        self.conv2 = nn.Conv2d(features, features, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.conv1(F.relu(self.norm1(x)))
        out = self.conv2(F.relu(self.norm2(out)))
        return out + x


class Hourglass(nn.Module):
    """U-Net style encoder/decoder with skip concatenation.

    The output keeps the input resolution and carries
    ``block_expansion + in_features`` channels (the last decoder stage
    concatenated with the raw input).
    """

    def __init__(
        self,
        in_features: int,
        block_expansion: int,
        num_blocks: int,
        max_features: int,
    ) -> None:
        super().__init__()
        if num_blocks < 1:
            raise InvalidArgumentError(f"num_blocks must be >= 1, got {num_blocks}")

        def width(level: int) -> int:
            return min(max_features, block_expansion * (2**level))

        self.down_blocks = nn.ModuleList(
            DownBlock2d(in_features if i == 0 else width(i), width(i + 1))
            for i in range(num_blocks)
        )
        up_blocks = []
        for i in reversed(range(num_blocks)):
            in_filters = (1 if i == num_blocks - 1 else 2) * width(i + 1)
            up_blocks.append(UpBlock2d(in_filters, width(i)))
        self.up_blocks = nn.ModuleList(up_blocks)
        self.out_channels = block_expansion + in_features
        self.num_blocks = num_blocks

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skips = [x]
        for down_block in self.down_blocks:
            skips.append(down_block(skips[-1]))
        out = skips.pop()
        for up_block in self.up_blocks:
            out = torch.cat([up_block(out), skips.pop()], dim=1)
        return out
