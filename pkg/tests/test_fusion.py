import numpy as np
import pytest
import torch

from hvan.fusion import HybridViewFusion, channel_gate, hvaf_forward, spatial_gate

from oracles import finite_difference_check, loop_channel_gate, loop_spatial_gate


def streams(shape=(2, 4, 3, 4, 5), seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=dtype), torch.randn(*shape, generator=g, dtype=dtype)


def test_reduction_must_divide():
    with pytest.raises(ValueError):
        HybridViewFusion(4, reduction=3)


def test_zeroed_mlp_halves_input():
    fuse = HybridViewFusion(4, reduction=2).double()
    with torch.no_grad():
        for p in fuse.mlp.parameters():
            p.zero_()
    f_t, f_s = streams()
    out = channel_gate(f_t, f_s, fuse)
    torch.testing.assert_close(out, 0.5 * torch.cat([f_t, f_s], dim=1))


def test_channel_gate_shape():
    fuse = HybridViewFusion(4, reduction=4).double()
    f_t, f_s = streams()
    assert channel_gate(f_t, f_s, fuse).shape == (2, 8, 3, 4, 5)


def test_channel_gate_matches_loop():
    torch.manual_seed(1)
    fuse = HybridViewFusion(4, reduction=2).double()
    f_t, f_s = streams(seed=2)
    ref = loop_channel_gate(
        f_t.numpy(), f_s.numpy(), fuse.mlp[0].weight.detach().numpy(), fuse.mlp[2].weight.detach().numpy()
    )
    np.testing.assert_allclose(channel_gate(f_t, f_s, fuse).detach().numpy(), ref, atol=1e-6)


def test_zeroed_conv_halves_input():
    fuse = HybridViewFusion(4, reduction=2).double()
    with torch.no_grad():
        fuse.conv_s.weight.zero_()
    f, _ = streams()
    torch.testing.assert_close(spatial_gate(f, fuse), 0.5 * f)


def test_constant_input_gives_constant_interior_gate():
    torch.manual_seed(3)
    fuse = HybridViewFusion(4, reduction=2).double()
    f = torch.full((1, 4, 5, 5, 5), 1.7, dtype=torch.float64)
    gate = fuse.spatial_attention(f)[0, 0]
    interior = gate[1:-1, 1:-1, 1:-1]
    # pooled maps both equal 1.7, so an interior voxel sees every kernel tap
    w = fuse.conv_s.weight.detach()
    expected = torch.sigmoid(1.7 * w.sum())
    torch.testing.assert_close(interior, torch.full_like(interior, expected.item()), atol=1e-12, rtol=0)
    out = spatial_gate(f, fuse)
    torch.testing.assert_close(out[0, :, 2, 2, 2], torch.full((4,), 1.7 * expected.item(), dtype=torch.float64))


def test_spatial_gate_matches_sliding_window_oracle():
    torch.manual_seed(4)
    fuse = HybridViewFusion(4, reduction=2).double()
    f, _ = streams((2, 4, 3, 4, 3), seed=5)
    ref = loop_spatial_gate(f.numpy(), fuse.conv_s.weight.detach().numpy())
    np.testing.assert_allclose(spatial_gate(f, fuse).detach().numpy(), ref, atol=1e-5)


def test_gates_strictly_inside_unit_interval():
    torch.manual_seed(5)
    fuse = HybridViewFusion(4, reduction=2).double()
    f_t, f_s = streams(seed=6)
    a_c = fuse.channel_attention(torch.cat([f_t, f_s], 1))
    a_s = fuse.spatial_attention(f_t)
    for a in (a_c, a_s):
        assert (a > 0).all() and (a < 1).all()


def test_hvaf_shape():
    fuse = HybridViewFusion(16)
    f_t, f_s = streams((1, 16, 4, 4, 4), dtype=torch.float32)
    assert hvaf_forward(f_t, f_s, fuse).shape == (1, 32, 4, 4, 4)


def test_hvaf_rejects_mismatch():
    fuse = HybridViewFusion(4, reduction=2)
    with pytest.raises(ValueError):
        hvaf_forward(torch.zeros(1, 4, 2, 2, 2), torch.zeros(1, 4, 2, 2, 3), fuse)
    with pytest.raises(ValueError):
        spatial_gate(torch.zeros(1, 3, 2, 2, 2), fuse)


def test_swapping_views_swaps_halves_with_diagonal_mlp():
    c = 3
    fuse = HybridViewFusion(c, reduction=1).double()
    with torch.no_grad():
        fuse.mlp[0].weight.copy_(torch.eye(2 * c))
        fuse.mlp[2].weight.copy_(torch.eye(2 * c))
        fuse.conv_s.weight.normal_()
    f_t, f_s = streams((2, c, 3, 3, 3), seed=7)
    out = hvaf_forward(f_t, f_s, fuse)
    swapped = hvaf_forward(f_s, f_t, fuse)
    torch.testing.assert_close(swapped[:, :c], out[:, c:])
    torch.testing.assert_close(swapped[:, c:], out[:, :c])


def test_hvaf_gradients():
    torch.manual_seed(8)
    fuse = HybridViewFusion(4, reduction=2).double()
    f_t, f_s = streams((1, 4, 3, 3, 3), seed=9)
    f_t.requires_grad_(True)
    f_s.requires_grad_(True)
    w = torch.randn(1, 8, 3, 3, 3, dtype=torch.float64)
    tensors = [f_t, f_s] + list(fuse.parameters())
    assert finite_difference_check(lambda: (hvaf_forward(f_t, f_s, fuse) * w).sum(), tensors) <= 1e-3
