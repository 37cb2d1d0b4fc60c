"""Hybrid-view adaptive fusion: a channel gate over both streams, then a
spatial gate on each view's half."""

import torch
import torch.nn as nn

__all__ = ["HybridViewFusion", "channel_gate", "spatial_gate", "hvaf_forward"]


class HybridViewFusion(nn.Module):
    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        fused = 2 * channels
        if reduction < 1 or fused % reduction:
            raise ValueError(f"reduction {reduction} must divide the fused channel count {fused}")
        self.channels = channels
        self.reduction = reduction
        # shared between the average- and max-pooled descriptors
        self.mlp = nn.Sequential(
            nn.Linear(fused, fused // reduction, bias=False),
            nn.ReLU(inplace=True),
            nn.Linear(fused // reduction, fused, bias=False),
        )
        # one spatial gate, shared by both views
        self.conv_s = nn.Conv3d(2, 1, kernel_size=3, padding=1, bias=False)

    def channel_attention(self, f: torch.Tensor) -> torch.Tensor:
        avg = f.mean(dim=(2, 3, 4))
        mx = f.amax(dim=(2, 3, 4))
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))[:, :, None, None, None]

    def spatial_attention(self, f: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([f.mean(dim=1, keepdim=True), f.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv_s(pooled))

    def forward(self, f_t, f_s):
        return hvaf_forward(f_t, f_s, self)


def channel_gate(f_t, f_s, params: HybridViewFusion) -> torch.Tensor:
    if f_t.shape != f_s.shape:
        raise ValueError(f"stream shapes differ: {tuple(f_t.shape)} vs {tuple(f_s.shape)}")
    if f_t.shape[1] != params.channels:
        raise ValueError(f"expected {params.channels} channels per view, got {f_t.shape[1]}")
    f = torch.cat([f_t, f_s], dim=1)
    return params.channel_attention(f) * f


def spatial_gate(f_view, params: HybridViewFusion) -> torch.Tensor:
    if f_view.shape[1] != params.channels:
        raise ValueError(f"expected {params.channels} channels, got {f_view.shape[1]}")
    return params.spatial_attention(f_view) * f_view


def hvaf_forward(f_t, f_s, params: HybridViewFusion) -> torch.Tensor:
    f = channel_gate(f_t, f_s, params)
    c = params.channels
    return torch.cat([spatial_gate(f[:, :c], params), spatial_gate(f[:, c:], params)], dim=1)
