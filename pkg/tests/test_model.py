import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from relight.model import (
    INSTANCE_NORM_EPS,
    SKIP_CHANNELS,
    ContentEncoder,
    Generator,
    MultiScaleDiscriminator,
    PatchDiscriminator,
    StyleEncoder,
    StyleMapper,
    TranslationModel,
    adain,
    build_model,
)

from conftest import tiny_config


def numpy_adain(x, scale, shift, eps=INSTANCE_NORM_EPS):
    """Independent reference: per-channel spatial standardization plus affine."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=(-2, -1), keepdims=True)
    std = x.std(axis=(-2, -1), keepdims=True)  # population std
    return scale * (x - mean) / (std + eps) + shift


class TestAdain:
    def test_hand_example(self):
        # 2x2 single channel, scale 2, shift 1; reference values were derived
        # without the std epsilon, so they hold to ~5e-5, not machine precision
        x = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]])
        out = adain(x, torch.tensor([2.0]), torch.tensor([1.0]))
        expected = torch.tensor([[[-1.68328, 0.10557], [1.89443, 3.68328]]])
        assert torch.allclose(out, expected, atol=5e-5)

    def test_hand_example_eps_aware(self):
        x = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]], dtype=torch.float64)
        out = adain(x, torch.tensor([2.0]), torch.tensor([1.0]))
        ref = numpy_adain(x.numpy(), 2.0, 1.0)
        np.testing.assert_allclose(out.numpy(), ref, atol=1e-12)

    def test_matches_reference_batched(self):
        g = torch.Generator().manual_seed(3)
        x = torch.randn(2, 4, 8, 8, generator=g, dtype=torch.float64)
        scale = torch.randn(2, 4, generator=g, dtype=torch.float64)
        shift = torch.randn(2, 4, generator=g, dtype=torch.float64)
        out = adain(x, scale, shift)
        ref = numpy_adain(x.numpy(), scale.numpy()[..., None, None],
                          shift.numpy()[..., None, None])
        np.testing.assert_allclose(out.numpy(), ref, atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(1, 6))
    def test_output_statistics(self, seed, size, channels):
        # post-AdaIN spatial mean equals the shift; std equals the scale
        # up to the eps shrinkage factor std/(std+eps)
        g = torch.Generator().manual_seed(seed)
        x = torch.randn(1, channels, size, size, generator=g, dtype=torch.float64)
        scale = torch.rand(channels, generator=g, dtype=torch.float64) * 0.9 + 0.1
        shift = torch.randn(channels, generator=g, dtype=torch.float64)
        out = adain(x, scale, shift)
        mean = out.mean(dim=(2, 3))[0]
        std = out.std(dim=(2, 3), correction=0)[0]
        assert torch.allclose(mean, shift, atol=1e-4)
        in_std = x.std(dim=(2, 3), correction=0)[0]
        assert torch.allclose(std, scale * in_std / (in_std + INSTANCE_NORM_EPS), atol=1e-9)
        assert torch.allclose(std, scale, atol=1e-4)

    def test_unbatched_matches_batched(self):
        g = torch.Generator().manual_seed(5)
        x = torch.randn(3, 6, 6, generator=g)
        s = torch.tensor([2.0, 0.5, 1.0])
        b = torch.tensor([0.0, -1.0, 3.0])
        single = adain(x, s, b)
        batched = adain(x.unsqueeze(0), s, b)[0]
        assert single.shape == x.shape
        assert torch.equal(single, batched)

    def test_rejects_mismatched_params(self):
        x = torch.randn(1, 3, 4, 4)
        with pytest.raises(ValueError):
            adain(x, torch.ones(2), torch.zeros(3))
        with pytest.raises(ValueError):
            adain(torch.randn(4, 4), torch.ones(1), torch.zeros(1))


class TestContentEncoder:
    def test_shapes(self):
        enc = ContentEncoder(base_channels=8)
        x = torch.randn(2, 3, 32, 48)
        code = enc(x)
        assert code.main.shape == (2, 32, 8, 12)
        assert code.skips[0].shape == (2, SKIP_CHANNELS, 16, 24)
        assert code.skips[1].shape == (2, SKIP_CHANNELS, 8, 12)

    def test_rejects_bad_input(self):
        enc = ContentEncoder(base_channels=8)
        with pytest.raises(ValueError):
            enc(torch.randn(2, 1, 32, 32))
        with pytest.raises(ValueError):
            enc(torch.randn(2, 3, 30, 32))

    def test_detach_breaks_graph(self):
        enc = ContentEncoder(base_channels=8)
        code = enc(torch.randn(1, 3, 16, 16))
        detached = code.detach()
        assert not detached.main.requires_grad
        assert all(not s.requires_grad for s in detached.skips)
        assert code.main.requires_grad


class TestStyleEncoder:
    def test_shape_and_pooling(self):
        enc = StyleEncoder(width=8, style_dim=3)
        s = enc(torch.randn(4, 3, 32, 32))
        assert s.shape == (4, 3)

    def test_rejects_bad_size(self):
        enc = StyleEncoder(width=8, style_dim=3)
        with pytest.raises(ValueError):
            enc(torch.randn(1, 3, 24, 24))


class TestStyleMapper:
    def test_site_layout(self):
        sites = (6, 6, 5)
        mapper = StyleMapper(style_dim=3, site_channels=sites, hidden=16)
        params = mapper(torch.randn(2, 3))
        assert len(params) == 3
        for (scale, shift), c in zip(params, sites):
            assert scale.shape == (2, c)
            assert shift.shape == (2, c)

    def test_zero_weights_leave_bias(self):
        # with all weights zeroed the mapper output is exactly the final bias,
        # which is initialized to scale 1 / shift 0
        mapper = StyleMapper(style_dim=3, site_channels=(4, 2), hidden=8)
        with torch.no_grad():
            for lin in mapper.net:
                if isinstance(lin, torch.nn.Linear):
                    lin.weight.zero_()
        params = mapper(torch.randn(5, 3))
        for scale, shift in params:
            assert torch.equal(scale, torch.ones_like(scale))
            assert torch.equal(shift, torch.zeros_like(shift))

    def test_unbatched_style(self):
        mapper = StyleMapper(style_dim=3, site_channels=(4,), hidden=8)
        params = mapper(torch.randn(3))
        assert params[0][0].shape == (1, 4)


class TestGenerator:
    def _code(self, cc, b=1, h=4, w=4):
        from relight.model import ContentCode
        g = torch.Generator().manual_seed(0)
        return ContentCode(
            main=torch.randn(b, cc, h, w, generator=g),
            skips=(torch.randn(b, SKIP_CHANNELS, 2 * h, 2 * w, generator=g),
                   torch.randn(b, SKIP_CHANNELS, h, w, generator=g)),
        )

    def test_output_shapes_and_ranges(self):
        gen = Generator(content_channels=32, class_count=9)
        mapper = StyleMapper(3, gen.adain_site_channels, 16)
        image, logits = gen(self._code(32, b=2), mapper(torch.randn(2, 3)))
        assert image.shape == (2, 3, 16, 16)
        assert logits.shape == (2, 9, 16, 16)
        assert image.min() >= -1.0 and image.max() <= 1.0

    def test_site_channel_tuple(self):
        gen = Generator(content_channels=32, class_count=9)
        assert gen.adain_site_channels == (32,) * 5 + (SKIP_CHANNELS, SKIP_CHANNELS)

    def test_needs_seven_sites(self):
        gen = Generator(content_channels=32, class_count=9)
        params = [(torch.ones(1, 32), torch.zeros(1, 32))] * 5
        with pytest.raises(ValueError):
            gen(self._code(32), params)


class TestDiscriminators:
    def test_patch_scores(self):
        d = PatchDiscriminator(width=8)
        s = d(torch.randn(2, 3, 32, 32))
        assert s.shape == (2, 1, 4, 4)

    def test_projection_zero_embed_matches_unconditional_body(self):
        # zeroing the embedding removes the conditional term entirely
        d = PatchDiscriminator(width=8, style_dim=3)
        x = torch.randn(2, 3, 32, 32)
        style = torch.randn(2, 3)
        with torch.no_grad():
            d.embed.weight.zero_()
        unconditioned = d.score(d.body(x))
        assert torch.equal(d(x, style), unconditioned)

    def test_projection_shifts_score_uniformly(self):
        d = PatchDiscriminator(width=8, style_dim=3)
        x = torch.randn(1, 3, 32, 32)
        style = torch.randn(1, 3)
        delta = d(x, style) - d.score(d.body(x))
        # the projection adds one scalar per sample across the whole map
        assert torch.allclose(delta, delta.reshape(1, -1)[:, :1].reshape(1, 1, 1, 1).expand_as(delta), atol=1e-6)

    def test_conditional_requires_style(self):
        d = PatchDiscriminator(width=8, style_dim=3)
        with pytest.raises(ValueError):
            d(torch.randn(1, 3, 32, 32))
        u = PatchDiscriminator(width=8)
        with pytest.raises(ValueError):
            u(torch.randn(1, 3, 32, 32), torch.randn(1, 3))

    def test_multiscale_pyramid(self):
        d = MultiScaleDiscriminator(width=8, scales=3)
        scores = d(torch.randn(1, 3, 64, 64))
        assert [s.shape[-1] for s in scores] == [8, 4, 2]

    def test_multiscale_survives_16px(self):
        d = MultiScaleDiscriminator(width=8, scales=3)
        scores = d(torch.randn(1, 3, 16, 16))
        assert len(scores) == 3
        assert all(s.numel() > 0 for s in scores)


class TestTranslationModel:
    def test_build_is_deterministic(self, tiny_cfg):
        a = build_model(tiny_cfg, seed=4)
        b = build_model(tiny_cfg, seed=4)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_build_leaves_global_rng_alone(self, tiny_cfg):
        torch.manual_seed(123)
        before = torch.rand(3)
        torch.manual_seed(123)
        build_model(tiny_cfg, seed=4)
        after = torch.rand(3)
        assert torch.equal(before, after)

    def test_roundtrip_shapes(self, tiny_cfg):
        model = build_model(tiny_cfg, seed=0)
        x = torch.randn(2, 3, 32, 32)
        code = model.encode_content(x)
        style = model.encode_style(x)
        assert style.shape == (2, tiny_cfg.style_dim)
        image, logits = model.decode(code, style)
        assert image.shape == x.shape
        assert logits.shape == (2, tiny_cfg.class_count, 32, 32)

    def test_parameter_split_covers_everything(self, tiny_cfg):
        model = build_model(tiny_cfg, seed=0)
        gen = {id(p) for p in model.generator_parameters()}
        disc = {id(p) for p in model.discriminator_parameters()}
        every = {id(p) for p in model.parameters()}
        assert gen | disc == every
        assert not gen & disc
