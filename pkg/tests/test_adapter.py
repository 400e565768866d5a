import numpy as np
import pytest
import torch

from ildiff.adapter import (
    AdapterConfig,
    LayoutAdapter,
    TeacherEncoder,
    adapter_forward,
    masked_patch_count,
    masked_student_features,
    patch_mask,
    project_to_latent,
    student_features,
    teacher_features,
    temporal_mix,
)
from ildiff.checkpoint import hash_tensors
from ildiff.errors import ConfigError, ParameterError, ShapeError
from ildiff.losses import distill_loss
from ildiff.synth import ClipSpec, SpriteSpec, generate_clip

from oracles import brute_adaptive_avg_pool

SMALL = AdapterConfig(temporal_depth=8, feature_channels=16, groups=4, student_width=8, teacher_width=24)


@pytest.fixture(scope="module")
def adapter():
    return LayoutAdapter(SMALL, 4, seed=0)


@pytest.fixture(scope="module")
def teacher():
    return TeacherEncoder(SMALL.feature_channels, SMALL.teacher_width, SMALL.teacher_seed)


def _sprite_frame(x):
    spec = ClipSpec(32, 32, 2, (0.2, 0.3, 0.9), (SpriteSpec("disk", (0.9, 0.1, 0.1), (x, 16.0), 6.0),))
    return torch.from_numpy(generate_clip(spec).rgb.rgb[:1].transpose(0, 3, 1, 2).copy())


def test_teacher_deterministic_and_layout_sensitive(teacher):
    a, b = _sprite_frame(12.0), _sprite_frame(20.0)
    assert torch.equal(teacher_features(a, teacher), teacher_features(a, teacher))
    assert (teacher_features(a, teacher) - teacher_features(b, teacher)).abs().sum() > 0


def test_teacher_is_frozen(teacher):
    assert not any(p.requires_grad for p in teacher.parameters())
    again = TeacherEncoder(SMALL.feature_channels, SMALL.teacher_width, SMALL.teacher_seed)
    assert hash_tensors(teacher.state_dict().items()) == hash_tensors(again.state_dict().items())


def test_default_student_is_lightweight():
    cfg = AdapterConfig()
    t = sum(p.numel() for p in TeacherEncoder(cfg.feature_channels, cfg.teacher_width).parameters())
    s = sum(p.numel() for p in LayoutAdapter(cfg, 4, seed=0).student.parameters())
    assert s < 0.1 * t


def test_student_matches_teacher_shape(adapter, teacher):
    for size in (16, 32, 64):
        x = torch.rand(2, 3, size, size)
        s, t = adapter.encode_frames(x), teacher_features(x, teacher)
        assert s.shape == t.shape
        assert student_features(x, adapter).shape == t.shape
        assert distill_loss(s, t) > 0


def test_shape_errors(adapter, teacher):
    with pytest.raises(ShapeError):
        teacher_features(torch.rand(1, 4, 32, 32), teacher)
    with pytest.raises(ShapeError):
        student_features(torch.rand(1, 3, 30, 32), adapter)


def test_mask_ratio_zero_is_identity(adapter):
    x = torch.rand(2, 3, 32, 32)
    assert torch.equal(masked_student_features(x, 0.0, 1, adapter), adapter.encode_frames(x))


def test_mask_same_seed_same_output(adapter):
    x = torch.rand(2, 3, 32, 32)
    a = masked_student_features(x, 0.75, 9, adapter)
    assert torch.equal(a, masked_student_features(x, 0.75, 9, adapter))
    assert not torch.equal(a, masked_student_features(x, 0.75, 10, adapter))


@pytest.mark.parametrize("ratio", [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99])
def test_mask_count(ratio):
    rng = np.random.default_rng(0)
    for grid in ((8, 8), (4, 4), (3, 5)):
        total = grid[0] * grid[1]
        expected = int(np.floor(ratio * total + 0.5))
        if expected >= total:
            with pytest.raises(ParameterError):
                patch_mask(grid, ratio, rng)
            continue
        mask = patch_mask(grid, ratio, rng)
        count = 0
        for row in mask:
            for v in row:
                count += int(v)
        assert count == expected == masked_patch_count(ratio, total)


def test_mask_ratio_one_rejected(adapter):
    with pytest.raises(ParameterError):
        masked_student_features(torch.rand(1, 3, 32, 32), 1.0, 0, adapter)


def test_masked_patches_are_zeroed(adapter):
    from ildiff.adapter import apply_patch_masks
    x = torch.rand(1, 3, 16, 16) + 0.1
    mask = np.array([[[True, False], [False, True]]])
    y = apply_patch_masks(x, mask, 8)
    assert torch.all(y[..., :8, :8] == 0) and torch.all(y[..., 8:, 8:] == 0)
    assert torch.equal(y[..., :8, 8:], x[..., :8, 8:])


def test_depth_zero_bitwise_identity(adapter):
    f = torch.randn(8, 16, 4, 4)
    out = temporal_mix(f, 0, adapter)
    assert out is f or torch.equal(out, f)


def _changed_frames(adapter, depth, n, i, seed):
    g = torch.Generator().manual_seed(seed)
    f = torch.randn(n, SMALL.feature_channels, 4, 4, generator=g, dtype=torch.float64)
    pert = f.clone()
    pert[i] += torch.randn(pert[i].shape, generator=g, dtype=torch.float64)
    ad = adapter.double()
    base, moved = temporal_mix(f, depth, ad), temporal_mix(pert, depth, ad)
    adapter.float()
    return {j for j in range(n) if not torch.equal(base[j], moved[j])}


@pytest.mark.parametrize("depth", [0, 1, 3, 5, 8])
def test_temporal_locality(adapter, depth):
    n = 8
    radius = 0
    for i in range(n):
        changed = _changed_frames(adapter, depth, n, i, seed=depth * 10 + i)
        assert changed == {j for j in range(n) if abs(i - j) <= depth}
        radius = max(radius, max(abs(j - i) for j in changed))
    assert radius == min(depth, n - 1)


def test_temporal_output_nonnegative(adapter):
    out = temporal_mix(torch.randn(6, 16, 4, 4), 3, adapter)
    assert out.shape == (6, 16, 4, 4)
    assert out.min() >= 0


def test_temporal_config_errors(adapter):
    with pytest.raises(ConfigError):
        LayoutAdapter(AdapterConfig(feature_channels=16, groups=5), 4)
    with pytest.raises(ConfigError):
        temporal_mix(torch.randn(4, 16, 4, 4), 9, adapter)


def test_projection_shapes_and_constant_input():
    ad = LayoutAdapter(SMALL, 4, seed=0)
    torch.nn.init.normal_(ad.projection.conv.weight)
    for hw in ((8, 8), (13, 7), (16, 16)):
        assert project_to_latent(torch.randn(3, 16, *hw), ad, (4, 4)).shape == (3, 4, 4, 4)
    # 1x1 spatial input through a 3x3 zero-padded conv is exactly constant after pooling
    c = torch.ones(2, 16, 1, 1) * 0.7
    out = project_to_latent(c, ad, (3, 3))
    assert torch.equal(out, out[..., :1, :1].expand_as(out))


@pytest.mark.parametrize("seed", range(6))
def test_adaptive_pool_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    h, w = (int(v) for v in rng.integers(3, 17, 2))
    oh, ow = int(rng.integers(1, h + 1)), int(rng.integers(1, w + 1))
    ad = LayoutAdapter(SMALL, 2, seed=0).double()
    with torch.no_grad():
        ad.projection.conv.weight.normal_()
        ad.projection.conv.bias.normal_()
    x = torch.from_numpy(rng.normal(size=(1, 16, h, w)))
    conv = ad.projection.conv(x)[0]
    expected = np.asarray(brute_adaptive_avg_pool(conv.tolist(), oh, ow))
    got = project_to_latent(x, ad, (oh, ow))[0].detach().numpy()
    assert np.allclose(got, expected, atol=1e-12)


def test_depth_zero_permutation_equivariant():
    cfg = AdapterConfig(temporal_depth=0, feature_channels=16, groups=4, student_width=8, teacher_width=24)
    ad = LayoutAdapter(cfg, 4, seed=1)
    torch.nn.init.normal_(ad.projection.conv.weight, std=0.1)
    clip = torch.rand(6, 3, 32, 32)
    perm = torch.randperm(6)
    out = adapter_forward(clip, ad)
    assert torch.isfinite(out).all()
    assert torch.allclose(adapter_forward(clip[perm], ad), out[perm], atol=1e-6)


def test_depth_positive_breaks_permutation_equivariance():
    ad = LayoutAdapter(AdapterConfig(temporal_depth=2, feature_channels=16, groups=4, student_width=8,
                                     teacher_width=24), 4, seed=1)
    torch.nn.init.normal_(ad.projection.conv.weight, std=0.1)
    clip = torch.rand(6, 3, 32, 32)
    perm = torch.tensor([5, 0, 3, 1, 4, 2])
    out = adapter_forward(clip, ad)
    assert not torch.allclose(adapter_forward(clip[perm], ad), out[perm], atol=1e-4)


def test_adapter_forward_deterministic(adapter):
    clip = torch.rand(4, 3, 32, 32)
    a = adapter_forward(clip, adapter)
    assert a.shape == (4, 4, 8, 8)
    assert torch.equal(a, adapter_forward(clip, adapter))


def test_zero_init_projection_gives_zero_guidance(adapter):
    assert torch.count_nonzero(adapter_forward(torch.rand(3, 3, 32, 32), adapter)) == 0
