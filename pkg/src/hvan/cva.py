"""Cross-view attention: a stream is refined on the orthogonal view's planes,
with queries taken from the orthogonal stream."""

from __future__ import annotations

import torch

from .core import View
from .iva import IntraViewAttention

__all__ = ["CrossViewAttention", "cva_refine_transverse", "cva_refine_sagittal", "hva_stage"]


class CrossViewAttention(IntraViewAttention):
    """Refines the ``target`` stream on the other view's imaging planes.

    Keys and both values come from the target stream, queries from the other
    stream. Parameter layout is identical to :class:`IntraViewAttention` on the
    same planes, so a state dict can move between the two.
    """

    def __init__(self, channels, target, plane_size, proj_size=None, num_heads=1):
        target = View(target)
        super().__init__(channels, target.other, plane_size, proj_size, num_heads)
        self.target = target

    def forward(self, f_target: torch.Tensor, f_query: torch.Tensor) -> torch.Tensor:
        if f_target.shape != f_query.shape:
            raise ValueError(
                f"stream shapes differ: {tuple(f_target.shape)} vs {tuple(f_query.shape)}"
            )
        return super().forward(f_target, query=f_query)


def _expect(block, target):
    if block.target is not target:
        raise ValueError(f"block refines the {block.target.value} stream, not {target.value}")


def cva_refine_transverse(f_t, f_s, block: CrossViewAttention):
    """New transverse features, attended on sagittal planes with sagittal queries."""
    _expect(block, View.TRANSVERSE)
    return block(f_t, f_s)


def cva_refine_sagittal(f_t, f_s, block: CrossViewAttention):
    """New sagittal features, attended on transverse planes with transverse queries."""
    _expect(block, View.SAGITTAL)
    return block(f_s, f_t)


def hva_stage(f_t, f_s, iva_t=None, iva_s=None, cva_t=None, cva_s=None):
    """IVA per stream, then both CVA directions from the same post-IVA snapshot.

    Any block may be None, which skips it (ablations).
    """
    if iva_t is not None:
        f_t = iva_t(f_t)
    if iva_s is not None:
        f_s = iva_s(f_s)
    if cva_t is None and cva_s is None:
        return f_t, f_s
    if f_t.shape != f_s.shape:
        raise ValueError(f"stream shapes differ: {tuple(f_t.shape)} vs {tuple(f_s.shape)}")
    new_t = cva_refine_transverse(f_t, f_s, cva_t) if cva_t is not None else f_t
    new_s = cva_refine_sagittal(f_t, f_s, cva_s) if cva_s is not None else f_s
    return new_t, new_s
