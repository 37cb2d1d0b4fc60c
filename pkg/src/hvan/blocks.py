import math

import torch.nn as nn
import torch.nn.functional as F

from .core import View


def group_norm(channels: int, groups: int = 8) -> nn.GroupNorm:
    # fall back to fewer groups when channels is not a multiple of ``groups``
    return nn.GroupNorm(math.gcd(groups, channels), channels)


def plane_kernel(view) -> tuple[int, int, int]:
    """3x3 kernel lying in the imaging plane of ``view`` (axes H, W, D)."""
    return (3, 3, 1) if View(view) is View.TRANSVERSE else (1, 3, 3)


class ConvNormAct(nn.Sequential):
    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1):
        padding = tuple(k // 2 for k in _triple(kernel_size))
        super().__init__(
            nn.Conv3d(in_channels, out_channels, kernel_size, stride=stride, padding=padding, bias=False),
            group_norm(out_channels),
            nn.ReLU(inplace=True),
        )


class ResidualBlock(nn.Module):
    """Two-convolution basic block with a 1x1x1 projection shortcut on channel change."""

    def __init__(self, in_channels, out_channels, kernel_size=3):
        super().__init__()
        padding = tuple(k // 2 for k in _triple(kernel_size))
        self.conv1 = nn.Conv3d(in_channels, out_channels, kernel_size, padding=padding, bias=False)
        self.norm1 = group_norm(out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, kernel_size, padding=padding, bias=False)
        self.norm2 = group_norm(out_channels)
        if in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv3d(in_channels, out_channels, 1, bias=False), group_norm(out_channels)
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


def _triple(k):
    return (k, k, k) if isinstance(k, int) else tuple(k)
