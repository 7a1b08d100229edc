import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpfnet import tensor as T
from dpfnet.checkpoint import write_entries
from dpfnet.gradcheck import gradcheck, worst
from dpfnet.losses import (FrozenFeatureExtractor, LossWeights, fourier_loss, gaussian_taps, loss_terms,
                           perceptual_loss, ssim, ssim_loss, total_loss)
from dpfnet.tensor import Tensor

from conftest import leaf
from oracles import naive_fourier_loss


def images(seed, shape=(2, 3, 16, 16)):
    return np.random.default_rng(seed).random(shape)


class TestSSIM:
    def test_taps_normalised_and_symmetric(self):
        g = gaussian_taps(11, 1.5)
        assert g.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_array_equal(g, g[::-1])

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_identity(self, seed):
        x = images(seed)
        assert abs(ssim(Tensor(x), Tensor(x)).item() - 1) <= 1e-6
        assert ssim_loss(Tensor(x), Tensor(x)).item() == pytest.approx(0, abs=1e-6)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_symmetric_and_bounded(self, seed):
        x, y = images(seed), images(seed + 1)
        a, b = ssim(Tensor(x), Tensor(y)).item(), ssim(Tensor(y), Tensor(x)).item()
        assert abs(a - b) <= 1e-6
        assert -1 <= a <= 1
        assert ssim_loss(Tensor(x), Tensor(y)).item() >= 0

    def test_inverted_binary_image(self, rng):
        x = (rng.random((1, 3, 24, 24)) > 0.5).astype(np.float64)
        assert ssim(Tensor(x), Tensor(1 - x)).item() < 0.5

    def test_too_small(self):
        with pytest.raises(ValueError, match="smaller than"):
            ssim(Tensor(np.zeros((1, 3, 10, 10))), Tensor(np.zeros((1, 3, 10, 10))))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ssim(Tensor(np.zeros((1, 3, 12, 12))), Tensor(np.zeros((1, 3, 12, 13))))


class TestFourier:
    def test_self_distance_exactly_zero(self, rng):
        x = Tensor(rng.random((2, 3, 12, 10)))
        assert fourier_loss(x, x).item() == 0.0

    @pytest.mark.parametrize("hw", [(9, 7), (11, 5)])
    def test_constant_offset(self, rng, hw):
        h, w = hw
        c = 0.125
        x = rng.random((1, 3, h, w)) + 0.5
        got = fourier_loss(Tensor(x), Tensor(x + c)).item()
        # only the DC amplitude moves, by c*H*W in each of 3 channels; 6*H*W spectral entries
        closed = 3 * (c * h * w) ** 2 / (6 * h * w)
        assert got == pytest.approx(closed, rel=1e-9)
        assert got == pytest.approx(naive_fourier_loss(x, x + c), rel=1e-9)

    def test_matches_naive_dft_path(self, rng):
        x, y = rng.random((2, 3, 9, 13)), rng.random((2, 3, 9, 13))
        fast = fourier_loss(Tensor(x), Tensor(y)).item()
        assert abs(fast - naive_fourier_loss(x, y)) <= 1e-4 * max(1.0, fast)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_symmetric_nonnegative(self, seed):
        x, y = images(seed, (1, 3, 8, 8)), images(seed + 7, (1, 3, 8, 8))
        a, b = fourier_loss(Tensor(x), Tensor(y)).item(), fourier_loss(Tensor(y), Tensor(x)).item()
        assert a >= 0
        assert abs(a - b) <= 1e-6 * max(1.0, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            fourier_loss(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((2, 3, 8, 8))))


class TestPerceptual:
    def test_zero_at_identity(self, rng):
        x = Tensor(rng.random((2, 3, 16, 16)))
        assert perceptual_loss(x, x, FrozenFeatureExtractor()).item() == 0.0

    def test_feature_shape(self, rng):
        feats = FrozenFeatureExtractor()(Tensor(rng.random((1, 3, 32, 48))))
        assert feats.shape == (1, 64, 2, 3)

    def test_deterministic(self, rng):
        x = Tensor(rng.random((1, 3, 32, 32)).astype(np.float32))
        a, b = FrozenFeatureExtractor(7), FrozenFeatureExtractor(7)
        assert a.checksum() == b.checksum()
        np.testing.assert_array_equal(a(x).data, b(x).data)
        assert FrozenFeatureExtractor(8).checksum() != a.checksum()

    def test_quadratic_scaling(self, rng):
        ext = FrozenFeatureExtractor().astype(np.float64)
        x = rng.random((1, 3, 32, 32))
        delta = 1e-4 * rng.standard_normal(x.shape)
        one = perceptual_loss(Tensor(x), Tensor(x + delta), ext).item()
        two = perceptual_loss(Tensor(x), Tensor(x + 2 * delta), ext).item()
        assert one > 0
        assert two / one == pytest.approx(4.0, rel=1e-2)

    def test_from_file(self, tmp_path):
        ref = FrozenFeatureExtractor(3)
        write_entries(tmp_path / "ext.dpfn", ref.named_weights())
        loaded = FrozenFeatureExtractor.from_file(tmp_path / "ext.dpfn")
        assert loaded.checksum() == ref.checksum()

    def test_from_file_needs_stages(self, tmp_path):
        write_entries(tmp_path / "empty.dpfn", {"other": np.zeros(2, dtype=np.float32)})
        with pytest.raises(ValueError, match="stage0"):
            FrozenFeatureExtractor.from_file(tmp_path / "empty.dpfn")

    def test_weights_never_receive_gradient(self, rng):
        ext = FrozenFeatureExtractor().astype(np.float64)
        x = leaf(rng.random((1, 3, 16, 16)))
        with T.GradTape() as tape:
            loss = perceptual_loss(x, Tensor(rng.random((1, 3, 16, 16))), ext)
        grads = tape.backward(loss)
        assert set(grads) == {x}


class TestTotal:
    def test_identical_images_zero(self, rng):
        x = Tensor(rng.random((1, 3, 16, 16)))
        assert total_loss(x, x).item() == pytest.approx(0.0, abs=1e-6)

    def test_zero_weights_is_ssim_loss(self, rng):
        x, y = Tensor(rng.random((1, 3, 16, 16))), Tensor(rng.random((1, 3, 16, 16)))
        got = total_loss(x, y, LossWeights(0.0, 0.0)).item()
        assert got == ssim_loss(x, y).item()

    def test_default_weighted_sum(self, rng):
        assert LossWeights() == LossWeights(1.0, 0.2)
        x, y = Tensor(rng.random((2, 3, 16, 16))), Tensor(rng.random((2, 3, 16, 16)))
        ext = FrozenFeatureExtractor()
        expected = (ssim_loss(x, y).item() + 1.0 * fourier_loss(x, y).item()
                    + 0.2 * perceptual_loss(x, y, ext).item())
        assert total_loss(x, y, LossWeights(), ext).item() == pytest.approx(expected, rel=1e-12)
        terms = loss_terms(x, y, LossWeights(), ext).values()
        assert set(terms) == {"loss_total", "loss_ssim", "loss_fourier", "loss_perceptual"}

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(-1.0, 0.2)


class TestGradients:
    """Float64 finite-difference checks on 16x16 inputs with a 7x7 SSIM window."""

    @pytest.fixture
    def pair(self, rng):
        return leaf(rng.random((1, 3, 16, 16))), Tensor(rng.random((1, 3, 16, 16)))

    def test_ssim_loss(self, pair):
        x, y = pair
        assert worst(gradcheck(lambda: ssim_loss(x, y, 7), [x])).rel_error < 1e-3

    def test_fourier_loss(self, pair):
        x, y = pair
        assert worst(gradcheck(lambda: fourier_loss(x, y), [x])).rel_error < 1e-3

    def test_perceptual_loss(self, pair):
        x, y = pair
        ext = FrozenFeatureExtractor().astype(np.float64)
        assert worst(gradcheck(lambda: perceptual_loss(x, y, ext), [x])).rel_error < 1e-3

    def test_total_loss(self, pair):
        x, y = pair
        ext = FrozenFeatureExtractor().astype(np.float64)
        f = lambda: total_loss(x, y, LossWeights(), ext, window=7)
        assert worst(gradcheck(f, [x], max_entries=48)).rel_error < 1e-3
