"""Gradient-weighted class activation maps for the per-view streams."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .core import View
from .network import N_STAGES, HybridViewNet

__all__ = ["cam", "normalize_map"]


def normalize_map(m: torch.Tensor) -> torch.Tensor:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return torch.zeros_like(m)
    return (m - lo) / (hi - lo)


def cam(model: HybridViewNet, v_t=None, v_s=None, stage: int = 4) -> dict[View, np.ndarray]:
    """One heatmap per available view for a single case.

    ``stage`` counts from 1. Volumes may be (H, W, D) arrays or tensors.
    """
    if not 1 <= stage <= N_STAGES:
        raise ValueError(f"stage must be in 1..{N_STAGES}, got {stage}")
    cfg = model.config

    def prep(v):
        if v is None:
            return None
        t = torch.as_tensor(np.asarray(v, dtype=np.float32))
        if t.dim() == 3:
            t = t[None, None]
        if t.dim() != 5 or t.shape[0] != 1:
            raise ValueError(f"cam expects a single case, got shape {tuple(t.shape)}")
        return t

    was_training = model.training
    model.eval()
    try:
        with torch.enable_grad():
            stages, fused = model.forward_features(prep(v_t), prep(v_s))
            logit = model.head(fused.mean(dim=(2, 3, 4))).sum()
            feats = [stages[stage - 1][v] for v in cfg.views]
            grads = torch.autograd.grad(logit, feats)
    finally:
        model.train(was_training)

    maps = {}
    for view, f, g in zip(cfg.views, feats, grads):
        weights = g.mean(dim=(2, 3, 4), keepdim=True)
        m = F.relu((weights * f).sum(dim=1, keepdim=True)).detach()
        m = F.interpolate(m, size=cfg.input_size, mode="trilinear", align_corners=False)
        maps[view] = normalize_map(m[0, 0]).numpy()
    return maps
