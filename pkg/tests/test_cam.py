import numpy as np
import pytest
import torch

from hvan.cam import cam, normalize_map
from hvan.core import View
from hvan.network import ModelConfig, build

TINY = dict(input_size=(32, 32, 32), stage_channels=(4, 8, 16, 32))


def vols(seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((32, 32, 32)).astype(np.float32), rng.standard_normal((32, 32, 32)).astype(np.float32)


def test_normalize_map():
    m = torch.tensor([[1.0, 3.0], [2.0, 5.0]])
    out = normalize_map(m)
    assert out.min() == 0 and out.max() == 1
    assert torch.equal(normalize_map(torch.full((3, 3), 0.7)), torch.zeros(3, 3))


@pytest.mark.parametrize("stage", [1, 2, 3, 4])
def test_dual_maps_shape_and_range(stage):
    model = build(ModelConfig(**TINY))
    maps = cam(model, *vols(), stage=stage)
    assert set(maps) == {View.TRANSVERSE, View.SAGITTAL}
    for m in maps.values():
        assert m.shape == (32, 32, 32)
        assert m.min() >= 0 and m.max() <= 1
        assert (m.min() == 0 and m.max() == 1) or not m.any()


def test_single_view_gives_one_map():
    model = build(ModelConfig(use_sagittal=False, use_cva=False, use_hvaf=False, **TINY))
    v_t, _ = vols()
    assert list(cam(model, v_t, None)) == [View.TRANSVERSE]


def test_zero_head_gives_zero_maps():
    model = build(ModelConfig(**TINY))
    with torch.no_grad():
        model.head.weight.zero_()
    for m in cam(model, *vols()).values():
        assert not m.any()


def test_invariant_to_positive_head_scaling():
    model = build(ModelConfig(**TINY))
    a = cam(model, *vols(1), stage=3)
    with torch.no_grad():
        model.head.weight.mul_(7.0)
        model.head.bias.add_(3.0)
    b = cam(model, *vols(1), stage=3)
    for v in a:
        np.testing.assert_allclose(a[v], b[v], atol=1e-5)


def test_matches_hook_based_reference():
    """Independent Grad-CAM through forward hooks on the last stage modules."""
    cfg = ModelConfig(use_iva=False, use_cva=False, use_hvaf=False, **TINY)
    model = build(cfg)
    v_t, v_s = vols(2)
    captured = {}

    def keep(name):
        def hook(_, __, out):
            out.retain_grad()
            captured[name] = out

        return hook

    for v in ("transverse", "sagittal"):
        model.encoders[v].stages[3].register_forward_hook(keep(v))
    model.eval()
    logit = model(torch.from_numpy(v_t)[None, None], torch.from_numpy(v_s)[None, None])
    logit.sum().backward()
    got = cam(model, v_t, v_s, stage=4)
    for view in View:
        f = captured[view.value]
        w = f.grad.mean(dim=(2, 3, 4), keepdim=True)
        m = torch.relu((w * f).sum(1, keepdim=True)).detach()
        m = torch.nn.functional.interpolate(m, size=(32, 32, 32), mode="trilinear", align_corners=False)[0, 0]
        ref = normalize_map(m).numpy()
        np.testing.assert_allclose(got[view], ref, atol=1e-6)


def test_bad_stage():
    model = build(ModelConfig(**TINY))
    with pytest.raises(ValueError):
        cam(model, *vols(), stage=5)


def test_restores_training_mode():
    model = build(ModelConfig(**TINY))
    model.train()
    cam(model, *vols())
    assert model.training
