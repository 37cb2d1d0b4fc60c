"""Dual-stream CNN-transformer classifier and its configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvNormAct, ResidualBlock
from .core import View, plane_shape
from .cva import CrossViewAttention, hva_stage
from .fusion import HybridViewFusion
from .iva import IntraViewAttention, default_proj_size

__all__ = ["ModelConfig", "HybridViewNet", "build", "predict_proba", "ABLATION_GRID"]

N_STAGES = 4
DOWNSAMPLE = 2 ** (N_STAGES + 1)


@dataclass
class ModelConfig:
    input_size: tuple = (128, 128, 128)
    stage_channels: tuple = (32, 64, 128, 256)
    proj_sizes: tuple | None = None
    use_transverse: bool = True
    use_sagittal: bool = True
    use_iva: bool = True
    use_cva: bool = True
    use_hvaf: bool = True
    reduction: int = 16
    num_heads: int = 1
    seed: int = 0

    def __post_init__(self):
        self.input_size = tuple(int(s) for s in self.input_size)
        self.stage_channels = tuple(int(c) for c in self.stage_channels)
        if self.proj_sizes is not None:
            self.proj_sizes = tuple(int(p) for p in self.proj_sizes)

    def validate(self) -> "ModelConfig":
        if len(self.input_size) != 3 or any(s < DOWNSAMPLE or s % DOWNSAMPLE for s in self.input_size):
            raise ValueError(f"input extents must be positive multiples of {DOWNSAMPLE}, got {self.input_size}")
        if len(self.stage_channels) != N_STAGES or min(self.stage_channels) < 1:
            raise ValueError(f"need {N_STAGES} positive stage widths, got {self.stage_channels}")
        if self.proj_sizes is not None and len(self.proj_sizes) != N_STAGES:
            raise ValueError(f"need {N_STAGES} projection sizes, got {self.proj_sizes}")
        if not (self.use_transverse or self.use_sagittal):
            raise ValueError("at least one view must be enabled")
        dual = self.use_transverse and self.use_sagittal
        if self.use_cva and not dual:
            raise ValueError("cross-view attention needs both views")
        if self.use_hvaf and not dual:
            raise ValueError("hybrid-view fusion needs both views")
        if self.use_hvaf and (2 * self.stage_channels[-1]) % self.reduction:
            raise ValueError(
                f"reduction {self.reduction} must divide fused width {2 * self.stage_channels[-1]}"
            )
        return self

    @property
    def views(self) -> list[View]:
        out = []
        if self.use_transverse:
            out.append(View.TRANSVERSE)
        if self.use_sagittal:
            out.append(View.SAGITTAL)
        return out

    def stage_size(self, i: int) -> tuple[int, int, int]:
        return tuple(s // 2 ** (i + 2) for s in self.input_size)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


# component ablation rows, in order: (transverse, sagittal, iva, cva, hvaf)
ABLATION_GRID = [
    (True, False, False, False, False),
    (True, False, True, False, False),
    (False, True, False, False, False),
    (False, True, True, False, False),
    (True, True, False, False, False),
    (True, True, True, False, False),
    (True, True, True, True, False),
    (True, True, True, True, True),
]


class Encoder(nn.Module):
    """Stem plus four downsampling stages of one view's stream (attention is held by the parent)."""

    def __init__(self, channels):
        super().__init__()
        stem = max(1, channels[0] // 2)
        self.stem = ConvNormAct(1, stem, stride=2)
        stages = []
        prev = stem
        for c in channels:
            stages.append(nn.Sequential(ConvNormAct(prev, c, stride=2), ResidualBlock(c, c), ResidualBlock(c, c)))
            prev = c
        self.stages = nn.ModuleList(stages)


class HybridViewNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config.validate()
        cfg = config
        self.encoders = nn.ModuleDict({v.value: Encoder(cfg.stage_channels) for v in cfg.views})
        self.iva = nn.ModuleDict()
        self.cva = nn.ModuleDict()
        for v in cfg.views:
            if cfg.use_iva:
                self.iva[v.value] = nn.ModuleList(
                    IntraViewAttention(c, v, plane_shape(cfg.stage_size(i), v), self._proj(i, v), cfg.num_heads)
                    for i, c in enumerate(cfg.stage_channels)
                )
            if cfg.use_cva:
                # refining stream v runs on the other view's planes
                self.cva[v.value] = nn.ModuleList(
                    CrossViewAttention(
                        c, v, plane_shape(cfg.stage_size(i), v.other), self._proj(i, v.other), cfg.num_heads
                    )
                    for i, c in enumerate(cfg.stage_channels)
                )
        width = cfg.stage_channels[-1]
        self.fusion = HybridViewFusion(width, cfg.reduction) if cfg.use_hvaf else None
        self.head = nn.Linear(width * len(cfg.views), 1)

    def _proj(self, i, view):
        a1, a2 = plane_shape(self.config.stage_size(i), view)
        if self.config.proj_sizes is not None:
            return min(self.config.proj_sizes[i], a1 * a2)
        return default_proj_size(a1 * a2)

    def _check_input(self, v, view):
        if v is None:
            raise ValueError(f"{view.value} volume is required by this configuration")
        if v.dim() == 4:
            v = v.unsqueeze(1)
        if v.dim() != 5 or v.shape[1] != 1 or tuple(v.shape[2:]) != self.config.input_size:
            raise ValueError(
                f"{view.value} volume must be (B, 1, {', '.join(map(str, self.config.input_size))}), "
                f"got {tuple(v.shape)}"
            )
        return v

    def forward_features(self, v_t=None, v_s=None):
        """Per-stage stream features (after attention) and the fused map."""
        cfg = self.config
        inputs = {View.TRANSVERSE: v_t, View.SAGITTAL: v_s}
        feats = {v: self.encoders[v.value].stem(self._check_input(inputs[v], v)) for v in cfg.views}
        stages = []
        for i in range(N_STAGES):
            feats = {v: self.encoders[v.value].stages[i](f) for v, f in feats.items()}
            if cfg.use_iva:
                feats = {v: self.iva[v.value][i](f) for v, f in feats.items()}
            if cfg.use_cva:
                f_t, f_s = hva_stage(
                    feats[View.TRANSVERSE],
                    feats[View.SAGITTAL],
                    cva_t=self.cva[View.TRANSVERSE.value][i],
                    cva_s=self.cva[View.SAGITTAL.value][i],
                )
                feats = {View.TRANSVERSE: f_t, View.SAGITTAL: f_s}
            stages.append(feats)
        if self.fusion is not None:
            fused = self.fusion(feats[View.TRANSVERSE], feats[View.SAGITTAL])
        else:
            fused = torch.cat([feats[v] for v in cfg.views], dim=1)
        return stages, fused

    def forward(self, v_t=None, v_s=None):
        _, fused = self.forward_features(v_t, v_s)
        return self.head(fused.mean(dim=(2, 3, 4)))


def build(config: ModelConfig) -> HybridViewNet:
    """Fresh model with parameters drawn from ``config.seed``."""
    state = torch.random.get_rng_state()
    torch.manual_seed(config.seed)
    try:
        return HybridViewNet(config)
    finally:
        torch.random.set_rng_state(state)


def predict_proba(model: HybridViewNet, v_t=None, v_s=None) -> torch.Tensor:
    return torch.sigmoid(model(v_t, v_s))
