import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from relight.inference import (
    TruncationSpec,
    extract_style,
    extract_style_fewshot,
    generate_timelapse,
    interpolate_style,
    translate,
    translate_batch,
    truncate_prior_style,
)
from relight.model import build_model
from relight.synthetic import toy_image

from conftest import tiny_config


@pytest.fixture(scope="module")
def model():
    return build_model(tiny_config(), seed=1)


def image(seed, size=32):
    return toy_image(np.random.default_rng(seed), size)


class TestTranslate:
    def test_shape_dtype_range(self, model):
        out = translate(model, image(0), np.zeros(3, dtype=np.float32))
        assert out.shape == (32, 32, 3)
        assert out.dtype == np.float32
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_batch_matches_single(self, model):
        images = [image(1), image(2), image(3)]
        styles = np.stack([extract_style(model, im) for im in images])
        batched = translate_batch(model, images, styles)
        for im, style, out in zip(images, styles, batched):
            single = translate(model, im, style)
            np.testing.assert_allclose(out, single, atol=1e-5)

    def test_batch_broadcasts_single_style(self, model):
        outs = translate_batch(model, [image(4), image(5)], np.zeros(3, dtype=np.float32))
        assert len(outs) == 2

    def test_batch_count_mismatch(self, model):
        with pytest.raises(ValueError):
            translate_batch(model, [image(4), image(5)], np.zeros((3, 3), dtype=np.float32))

    def test_style_changes_output(self, model):
        im = image(6)
        a = translate(model, im, np.array([2.0, 0.0, 0.0], dtype=np.float32))
        b = translate(model, im, np.array([-2.0, 0.0, 0.0], dtype=np.float32))
        assert not np.allclose(a, b)

    def test_rejects_bad_dims(self, model):
        with pytest.raises(ValueError):
            translate(model, np.zeros((30, 30, 3), dtype=np.float32),
                      np.zeros(3, dtype=np.float32))
        with pytest.raises(ValueError):
            translate(model, image(0), np.zeros(5, dtype=np.float32))


class TestStyleExtraction:
    def test_deterministic(self, model):
        im = image(7)
        np.testing.assert_array_equal(extract_style(model, im), extract_style(model, im))

    def test_fewshot_is_mean(self, model):
        ims = [image(8), image(9), image(10)]
        few = extract_style_fewshot(model, ims)
        mean = np.mean([extract_style(model, im) for im in ims], axis=0)
        np.testing.assert_allclose(few, mean, atol=1e-6)

    def test_fewshot_empty(self, model):
        with pytest.raises(ValueError):
            extract_style_fewshot(model, [])


class TestTruncation:
    def test_knob_validation(self):
        with pytest.raises(ValueError):
            TruncationSpec(variance_scale=1.5)
        with pytest.raises(ValueError):
            TruncationSpec(interp_alpha=-0.1)

    def test_defaults(self):
        spec = TruncationSpec()
        assert spec.variance_scale == 0.7
        assert spec.interp_alpha == 0.7

    @given(st.floats(0.0, 1.0))
    def test_prior_shrinks_toward_origin(self, scale):
        style = np.array([1.0, -2.0, 0.5], dtype=np.float32)
        out = truncate_prior_style(style, TruncationSpec(variance_scale=scale))
        np.testing.assert_allclose(out, style * scale, atol=1e-6)
        assert np.linalg.norm(out) <= np.linalg.norm(style) + 1e-6

    def test_interpolation_endpoints(self):
        a = np.array([1.0, 0.0, 0.0], dtype=np.float32)
        b = np.array([0.0, 1.0, 0.0], dtype=np.float32)
        np.testing.assert_array_equal(interpolate_style(a, b, 0.0), a)
        np.testing.assert_array_equal(interpolate_style(a, b, 1.0), b)

    @given(st.floats(0.0, 1.0))
    def test_interpolation_is_convex(self, alpha):
        a = np.array([2.0, -1.0], dtype=np.float32)
        b = np.array([0.0, 3.0], dtype=np.float32)
        out = interpolate_style(a, b, alpha)
        lo = np.minimum(a, b) - 1e-6
        hi = np.maximum(a, b) + 1e-6
        assert ((out >= lo) & (out <= hi)).all()

    def test_interpolation_validation(self):
        a = np.zeros(3, dtype=np.float32)
        with pytest.raises(ValueError):
            interpolate_style(a, a, 1.5)
        with pytest.raises(ValueError):
            interpolate_style(a, np.zeros(4, dtype=np.float32), 0.5)


class TestTimelapse:
    def test_one_frame_per_guidance(self, model):
        guidance = [image(20), image(21), image(22)]
        frames = generate_timelapse(model, image(19), guidance)
        assert len(frames) == 3
        assert all(f.shape == (32, 32, 3) for f in frames)

    def test_alpha_zero_reproduces_own_style(self, model):
        # with interp_alpha 0 every frame uses the content's own style
        im = image(23)
        frames = generate_timelapse(model, im, [image(24), image(25)],
                                    TruncationSpec(interp_alpha=0.0))
        own = translate(model, im, extract_style(model, im))
        for f in frames:
            np.testing.assert_allclose(f, own, atol=1e-6)

    def test_empty_guidance(self, model):
        with pytest.raises(ValueError):
            generate_timelapse(model, image(26), [])
