import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hvan.core import PlanarBatch, View, from_planes, to_sagittal_planes, to_transverse_planes

from oracles import loop_sagittal_planes, loop_transverse_planes

dims = st.integers(min_value=1, max_value=5)


def test_transverse_shape():
    p = to_transverse_planes(torch.zeros(2, 3, 4, 5, 6))
    assert p.data.shape == (12, 3, 4, 5)
    assert p.origin is View.TRANSVERSE
    assert p.parent_dims == (2, 4, 5, 6)


def test_sagittal_shape():
    p = to_sagittal_planes(torch.zeros(1, 2, 3, 4, 5))
    assert p.data.shape == (3, 2, 4, 5)


def test_single_voxel_transverse():
    f = torch.zeros(2, 3, 4, 5, 6)
    f[1, 0, 2, 3, 4] = 1.0
    p = to_transverse_planes(f).data
    assert p[1 * 6 + 4, 0, 2, 3] == 1.0
    assert p.sum() == 1.0
    np.testing.assert_array_equal(p.numpy(), loop_transverse_planes(f.numpy()))


def test_single_voxel_sagittal():
    f = torch.zeros(1, 2, 3, 4, 5)
    f[0, 1, 2, 1, 0] = 1.0
    p = to_sagittal_planes(f).data
    assert p[2, 1, 1, 0] == 1.0
    np.testing.assert_array_equal(p.numpy(), loop_sagittal_planes(f.numpy()))


def test_inverse_restores_index():
    f = torch.zeros(2, 3, 4, 5, 6)
    f[1, 0, 2, 3, 4] = 1.0
    p = to_transverse_planes(f)
    back = from_planes(p)
    assert back[1, 0, 2, 3, 4] == 1.0 and back.sum() == 1.0


def test_zero_roundtrip():
    z = torch.zeros(2, 2, 3, 3, 3)
    assert torch.equal(from_planes(to_sagittal_planes(z)), z)


def test_double_roundtrip():
    f = torch.randn(2, 3, 4, 5, 6)
    once = from_planes(to_transverse_planes(f))
    twice = to_transverse_planes(once)
    assert torch.equal(twice.data, to_transverse_planes(f).data)


@settings(max_examples=60, deadline=None)
@given(b=dims, c=dims, h=dims, w=dims, d=dims)
def test_roundtrip_bit_exact(b, c, h, w, d):
    f = torch.randn(b, c, h, w, d, dtype=torch.float64)
    assert torch.equal(from_planes(to_transverse_planes(f)), f)
    assert torch.equal(from_planes(to_sagittal_planes(f)), f)
    np.testing.assert_array_equal(to_transverse_planes(f).data.numpy(), loop_transverse_planes(f.numpy()))
    np.testing.assert_array_equal(to_sagittal_planes(f).data.numpy(), loop_sagittal_planes(f.numpy()))


@pytest.mark.parametrize("view,axis", [(View.TRANSVERSE, 4), (View.SAGITTAL, 2)])
def test_permutation_commutes_with_fold(view, axis):
    b, c, h, w, d = 2, 3, 4, 5, 6
    f = torch.randn(b, c, h, w, d)
    n = f.shape[axis]
    perm = torch.randperm(n, generator=torch.Generator().manual_seed(1))
    fold = to_transverse_planes if view is View.TRANSVERSE else to_sagittal_planes
    lhs = fold(f.index_select(axis, perm)).data
    block_perm = torch.cat([bi * n + perm for bi in range(b)])
    rhs = fold(f).data[block_perm]
    assert torch.equal(lhs, rhs)


def test_from_planes_rejects_mismatch():
    p = to_transverse_planes(torch.zeros(2, 3, 4, 5, 6))
    bad = PlanarBatch(p.data, View.TRANSVERSE, (2, 4, 5, 7))
    with pytest.raises(ValueError):
        from_planes(bad)
    with pytest.raises(ValueError):
        from_planes(PlanarBatch(p.data, View.SAGITTAL, p.parent_dims))


def test_rejects_non_5d():
    with pytest.raises(ValueError):
        to_transverse_planes(torch.zeros(2, 3, 4))
