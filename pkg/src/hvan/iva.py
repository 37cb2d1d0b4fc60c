"""Paired spatial/channel attention with shared queries and keys, and the
intra-view attention block built on it."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .blocks import ResidualBlock, plane_kernel
from .core import PlanarBatch, View, from_planes, to_planes

__all__ = [
    "PairedAttention",
    "IntraViewAttention",
    "epa_project",
    "spatial_attention",
    "channel_attention",
    "paired_attention",
    "iva_forward",
    "default_proj_size",
]


def default_proj_size(n_tokens: int, cap: int = 64) -> int:
    return min(cap, n_tokens)


class PairedAttention(nn.Module):
    """Learnables of one paired-attention block.

    ``q`` and ``k`` are shared between the spatial and channel branches;
    ``v_spatial`` and ``v_channel`` are separate. ``proj_k`` and ``proj_v``
    compress the token axis from ``n_tokens`` to ``proj_size`` for the spatial
    branch only.
    """

    def __init__(self, channels: int, n_tokens: int, proj_size: int | None = None, num_heads: int = 1):
        super().__init__()
        if proj_size is None:
            proj_size = default_proj_size(n_tokens)
        if not 1 <= proj_size <= n_tokens:
            raise ValueError(f"proj_size must lie in [1, {n_tokens}], got {proj_size}")
        if channels % num_heads:
            raise ValueError(f"channels ({channels}) not divisible by num_heads ({num_heads})")
        self.channels = channels
        self.n_tokens = n_tokens
        self.proj_size = proj_size
        self.num_heads = num_heads

        self.norm = nn.LayerNorm(channels)
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v_spatial = nn.Linear(channels, channels)
        self.v_channel = nn.Linear(channels, channels)
        self.proj_k = nn.Linear(n_tokens, proj_size, bias=False)
        self.proj_v = nn.Linear(n_tokens, proj_size, bias=False)
        nn.init.orthogonal_(self.proj_k.weight)
        nn.init.orthogonal_(self.proj_v.weight)

        init = math.sqrt(channels)
        self.gamma_s = nn.Parameter(torch.tensor(init))
        self.gamma_c = nn.Parameter(torch.tensor(init))

    def extra_repr(self):
        return f"channels={self.channels}, n_tokens={self.n_tokens}, proj_size={self.proj_size}, num_heads={self.num_heads}"

    def forward(self, x: torch.Tensor, query: torch.Tensor | None = None) -> torch.Tensor:
        """x, query: (B', N, C) tokens. Returns spatial + channel + x."""
        qs, ks, vs, vc = _project(self, x, query)
        return spatial_attention(qs, ks, vs, self) + channel_attention(qs, ks, vc, self) + x


def _project(params: PairedAttention, x, query=None):
    if x.shape[-1] != params.channels:
        raise ValueError(f"expected {params.channels} channels, got {x.shape[-1]}")
    xn = params.norm(x)
    qn = xn if query is None else params.norm(query)
    if qn.shape != xn.shape:
        raise ValueError(f"query tokens {tuple(qn.shape)} do not match {tuple(xn.shape)}")
    return params.q(qn), params.k(xn), params.v_spatial(xn), params.v_channel(xn)


def epa_project(p: PlanarBatch, params: PairedAttention, query: PlanarBatch | None = None):
    """Shared query/key and the two value projections, each (B', N, C).

    With ``query`` given, the queries come from it and everything else from
    ``p`` (cross-view use).
    """
    if p.data.shape[1] != params.channels:
        raise ValueError(f"expected {params.channels} channels, got {p.data.shape[1]}")
    return _project(params, p.tokens(), None if query is None else query.tokens())


def _heads(t: torch.Tensor, h: int) -> torch.Tensor:
    # (B', N, C) -> (B', h, N, C/h)
    bp, n, c = t.shape
    return t.reshape(bp, n, h, c // h).transpose(1, 2)


def _merge(t: torch.Tensor) -> torch.Tensor:
    bp, h, n, ch = t.shape
    return t.transpose(1, 2).reshape(bp, n, h * ch)


def spatial_attention(q, k, v, params: PairedAttention) -> torch.Tensor:
    """softmax(Q K_proj^T / gamma_s) V_proj, softmax over the projected tokens."""
    h = params.num_heads
    k_proj = params.proj_k(k.transpose(1, 2)).transpose(1, 2)  # (B', P, C)
    v_proj = params.proj_v(v.transpose(1, 2)).transpose(1, 2)
    logits = _heads(q, h) @ _heads(k_proj, h).transpose(-2, -1) / params.gamma_s
    return _merge(torch.softmax(logits, dim=-1) @ _heads(v_proj, h))


def channel_attention(q, k, v, params: PairedAttention) -> torch.Tensor:
    """Channel mixing by softmax(Q^T K / gamma_c) applied to V_channel.

    The softmax runs over the second axis of the C x C map, so row i holds
    the convex weights with which output channel i mixes the value channels.
    """
    h = params.num_heads
    qh, kh = _heads(q, h), _heads(k, h)
    attn = torch.softmax(qh.transpose(-2, -1) @ kh / params.gamma_c, dim=-1)
    return _merge(_heads(v, h) @ attn.transpose(-2, -1))


def paired_attention(p: PlanarBatch, params: PairedAttention, query: PlanarBatch | None = None) -> PlanarBatch:
    """Both attention branches summed with the (unnormalized) input planes."""
    out = params(p.tokens(), None if query is None else query.tokens())
    return p.with_tokens(out)


class IntraViewAttention(nn.Module):
    """Paired attention on one view's imaging planes, then a residual refinement.

    The refinement block convolves within the imaging plane only, so the whole
    block acts on each plane independently of its neighbours along the imaging
    axis.
    """

    def __init__(self, channels, view, plane_size, proj_size=None, num_heads=1):
        super().__init__()
        self.view = View(view)
        self.plane_size = tuple(plane_size)
        self.attn = PairedAttention(channels, self.plane_size[0] * self.plane_size[1], proj_size, num_heads)
        self.refine = ResidualBlock(channels, channels, plane_kernel(self.view))

    def forward(self, f: torch.Tensor, query: torch.Tensor | None = None) -> torch.Tensor:
        planes = to_planes(f, self.view)
        if planes.data.shape[-2:] != self.plane_size:
            raise ValueError(
                f"{self.view.value} planes {tuple(planes.data.shape[-2:])} do not match "
                f"configured plane size {self.plane_size}"
            )
        q_planes = None if query is None else to_planes(query, self.view)
        out = from_planes(paired_attention(planes, self.attn, q_planes))
        return self.refine(out)


def iva_forward(f: torch.Tensor, view, block: IntraViewAttention) -> torch.Tensor:
    if View(view) is not block.view:
        raise ValueError(f"block was built for {block.view.value} planes, not {View(view).value}")
    return block(f)
