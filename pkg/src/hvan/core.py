"""View geometry for (B, C, H, W, D) feature maps.

The transverse view images the (H, W) plane and steps along D; the sagittal
view images the (W, D) plane and steps along H. Attention inside a view runs
on planes, so the imaging axis is folded into the batch axis and unfolded
again afterwards. Within each original batch element the imaging index is
the fastest-varying part of the merged batch index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch

__all__ = [
    "View",
    "PlanarBatch",
    "to_transverse_planes",
    "to_sagittal_planes",
    "to_planes",
    "from_planes",
    "plane_shape",
]


class View(str, Enum):
    TRANSVERSE = "transverse"
    SAGITTAL = "sagittal"

    @property
    def other(self) -> "View":
        return View.SAGITTAL if self is View.TRANSVERSE else View.TRANSVERSE


@dataclass(frozen=True)
class PlanarBatch:
    """A stack of 2D planes cut from a 5D feature map.

    ``data`` has shape (B', C, A1, A2); ``parent_dims`` is (B, H, W, D) of the
    source map so the fold can be undone.
    """

    data: torch.Tensor
    origin: View
    parent_dims: tuple[int, int, int, int]

    @property
    def n_tokens(self) -> int:
        return self.data.shape[-2] * self.data.shape[-1]

    def tokens(self) -> torch.Tensor:
        """(B', N, C) token matrix, tokens in row-major plane order."""
        bp, c = self.data.shape[:2]
        return self.data.reshape(bp, c, -1).transpose(1, 2)

    def with_tokens(self, tokens: torch.Tensor) -> "PlanarBatch":
        bp, c, a1, a2 = self.data.shape
        data = tokens.transpose(1, 2).reshape(bp, c, a1, a2)
        return PlanarBatch(data, self.origin, self.parent_dims)


def _check_5d(f: torch.Tensor) -> None:
    if f.dim() != 5:
        raise ValueError(f"expected a (B, C, H, W, D) tensor, got shape {tuple(f.shape)}")


def to_transverse_planes(f: torch.Tensor) -> PlanarBatch:
    """(B, C, H, W, D) -> (B*D, C, H, W); plane d of element b lands at b*D + d."""
    _check_5d(f)
    b, c, h, w, d = f.shape
    data = f.permute(0, 4, 1, 2, 3).reshape(b * d, c, h, w)
    return PlanarBatch(data, View.TRANSVERSE, (b, h, w, d))


def to_sagittal_planes(f: torch.Tensor) -> PlanarBatch:
    """(B, C, H, W, D) -> (B*H, C, W, D); plane h of element b lands at b*H + h."""
    _check_5d(f)
    b, c, h, w, d = f.shape
    data = f.permute(0, 2, 1, 3, 4).reshape(b * h, c, w, d)
    return PlanarBatch(data, View.SAGITTAL, (b, h, w, d))


def to_planes(f: torch.Tensor, view: View | str) -> PlanarBatch:
    view = View(view)
    if view is View.TRANSVERSE:
        return to_transverse_planes(f)
    return to_sagittal_planes(f)


def from_planes(p: PlanarBatch) -> torch.Tensor:
    """Undo :func:`to_transverse_planes` or :func:`to_sagittal_planes`."""
    b, h, w, d = p.parent_dims
    if p.data.dim() != 4:
        raise ValueError(f"planar data must be 4D, got shape {tuple(p.data.shape)}")
    bp, c, a1, a2 = p.data.shape
    if p.origin is View.TRANSVERSE:
        if (bp, a1, a2) != (b * d, h, w):
            raise ValueError(
                f"transverse planes {tuple(p.data.shape)} do not match parent dims {p.parent_dims}"
            )
        return p.data.reshape(b, d, c, h, w).permute(0, 2, 3, 4, 1).contiguous()
    if (bp, a1, a2) != (b * h, w, d):
        raise ValueError(
            f"sagittal planes {tuple(p.data.shape)} do not match parent dims {p.parent_dims}"
        )
    return p.data.reshape(b, h, c, w, d).permute(0, 2, 1, 3, 4).contiguous()


def plane_shape(spatial: tuple[int, int, int], view: View | str) -> tuple[int, int]:
    """In-plane extents of ``view`` for a volume with spatial dims (H, W, D)."""
    h, w, d = spatial
    return (h, w) if View(view) is View.TRANSVERSE else (w, d)
