import numpy as np
import pytest

from dpfnet import tensor as T
from dpfnet.gradcheck import gradcheck, worst
from dpfnet.nn import Conv2d
from dpfnet.pfm import PFM, ComplexConvLayer, PfmBlock, channel_plan, complex_conv, pfm_block, pfm_forward
from dpfnet.tensor import Tensor

from conftest import leaf
from oracles import complex_product_oracle as oracle, complex_xcorr, random_layer


class TestComplexConv:
    def test_identity_layer(self, rng):
        layer = ComplexConvLayer(2, 2, rng)
        layer.phi.identity_()
        layer.psi.zero_()
        a, p = Tensor(rng.random((1, 2, 5, 5))), Tensor(rng.random((1, 2, 5, 5)))
        a2, p2 = complex_conv(a, p, layer)
        np.testing.assert_array_equal(a2.data, a.data)
        np.testing.assert_array_equal(p2.data, p.data)

    def test_scalar_pointwise_example(self, rng):
        layer = ComplexConvLayer(1, 1, rng, k=1)
        layer.phi.weight.data[...] = 0.0
        layer.psi.weight.data[...] = 1.0
        a = Tensor(np.full((1, 1, 1, 1), 2.0, dtype=np.float32))
        p = Tensor(np.full((1, 1, 1, 1), 1.0, dtype=np.float32))
        a2, p2 = complex_conv(a, p, layer)
        assert p2.data.item() == 2.0  # a*1 + b*2 with a=0, b=1
        assert a2.data.item() == -1.0  # a*2 - b*1

    def test_simultaneous_update(self, rng):
        # sequential overwrite would feed P' into the A update; check A' uses the old P
        layer = ComplexConvLayer(1, 1, rng, k=1)
        layer.phi.weight.data[...] = 2.0
        layer.psi.weight.data[...] = 3.0
        a2, p2 = complex_conv(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones((1, 1, 1, 1))), layer)
        assert p2.data.item() == 5.0 and a2.data.item() == -1.0

    @pytest.mark.parametrize("trial", range(10))
    def test_equals_complex_product(self, trial):
        rng = np.random.default_rng(trial)
        c_in, c_out = rng.integers(1, 5, size=2)
        layer = random_layer(rng, c_in, c_out)
        a = rng.standard_normal((2, c_in, 6, 7))
        p = rng.standard_normal((2, c_in, 6, 7))
        a2, p2 = complex_conv(Tensor(a), Tensor(p), layer)
        ref = oracle(a, p, layer)
        np.testing.assert_allclose(a2.data, ref.real, atol=1e-5)
        np.testing.assert_allclose(p2.data, ref.imag, atol=1e-5)

    def test_channel_mismatch(self, rng):
        layer = ComplexConvLayer(3, 4, rng)
        with pytest.raises(ValueError):
            complex_conv(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 4, 4))), layer)

    def test_shape_mismatch(self, rng):
        layer = ComplexConvLayer(2, 2, rng)
        with pytest.raises(ValueError):
            complex_conv(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 4, 5))), layer)

    def test_phi_psi_shared_between_planes(self, rng):
        layer = ComplexConvLayer(3, 16, rng)
        names = list(layer.named_parameters())
        assert names == ["phi.weight", "phi.bias", "psi.weight", "psi.bias"]
        assert layer.phi.weight.shape == layer.psi.weight.shape == (16, 3, 3, 3)


class TestBlock:
    def test_zero_in_zero_out(self, rng):
        block = PfmBlock([3, 16, 16, 16], rng)
        z = Tensor(np.zeros((1, 3, 6, 6), dtype=np.float32))
        a, p = pfm_block(z, z, block)
        assert not a.data.any() and not p.data.any()

    def test_channel_plan_shapes(self, rng):
        pfm = PFM(16, rng)
        plans = [[layer.phi.weight.shape[:2] for layer in b.layers] for b in pfm.blocks]
        assert plans[0] == [(16, 3), (16, 16), (16, 16)]
        assert plans[1] == [(16, 16)] * 3
        assert plans[2] == [(16, 16), (16, 16), (3, 16)]
        assert channel_plan(16) == [[3, 16, 16, 16], [16, 16, 16, 16], [16, 16, 16, 3]]
        assert len(pfm.blocks) == 3 and all(len(b.layers) == 3 for b in pfm.blocks)
        a = Tensor(np.ones((1, 3, 5, 5), dtype=np.float32))
        a1, _ = complex_conv(a, a, pfm.blocks[0].layers[0])
        assert a1.shape == (1, 16, 5, 5)

    def test_block_gradient(self, rng):
        block = PfmBlock([2, 3, 3, 2], rng)
        for prm in block.parameters():
            prm.data = prm.data.astype(np.float64)
            prm.data += 0.1 * rng.standard_normal(prm.shape)
        a, p = leaf(rng.standard_normal((1, 2, 5, 5))), leaf(rng.standard_normal((1, 2, 5, 5)))
        w1, w2 = rng.standard_normal((2, 1, 2, 5, 5))
        def f():
            a2, p2 = pfm_block(a, p, block)
            return T.tsum(a2 * w1) + T.tsum(p2 * w2)
        inputs = {"a": a, "p": p, **block.named_parameters()}
        assert worst(gradcheck(f, inputs, max_entries=8)).rel_error < 1e-3


class TestForward:
    def test_zero_image(self):
        pfm = PFM(16, np.random.default_rng(0))
        out = pfm(Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32)))
        assert not out.data.any()

    @pytest.mark.parametrize("hw", [(64, 64), (96, 80), (100, 60)])
    def test_shape_contract(self, hw):
        pfm = PFM(4, np.random.default_rng(0))
        x = Tensor(np.random.default_rng(1).random((1, 3) + hw).astype(np.float32))
        assert pfm(x).shape == (1, 3) + hw

    def test_random_finite_and_residual_reported(self, rng):
        pfm = PFM(8, rng)
        out = pfm(Tensor(rng.random((2, 3, 16, 16)).astype(np.float32)))
        assert np.isfinite(out.data).all()
        assert np.isfinite(pfm.imag_residual_rms) and pfm.imag_residual_rms > 0

    def test_identity_fixed_point(self, rng):
        # identity kernels, no activation: Cartesian recombination gives iFFT(A + jP)
        pfm = PFM(3, rng).identity_()
        for b in pfm.blocks:
            b.activation = "identity"
        x = rng.random((1, 3, 8, 8))
        z = np.fft.fft2(x)
        expected = np.fft.ifft2(np.abs(z) + 1j * np.angle(z)).real
        np.testing.assert_allclose(pfm(Tensor(x)).data, expected, atol=1e-6)
        from dpfnet.spectral import polar_decompose, fft2
        s = polar_decompose(fft2(Tensor(x)))
        a, p = s.amplitude, s.phase
        for b in pfm.blocks:
            a, p = pfm_block(a, p, b)
        np.testing.assert_array_equal(a.data, s.amplitude.data)
        np.testing.assert_array_equal(p.data, s.phase.data)

    def test_global_receptive_field(self, rng):
        pfm = PFM(4, rng)
        x = rng.random((1, 3, 32, 32))
        base = pfm(Tensor(x)).data
        x2 = x.copy()
        x2[0, 1, 2, 3] += 0.5
        diff = np.abs(pfm(Tensor(x2)).data - base)
        assert diff[0, :, 31, 31].max() > 1e-7
        assert diff[0, :, 20:, 20:].min() > 0

    def test_branch_gradient_8x8(self, rng):
        pfm = PFM(2, rng).astype(np.float64)
        x = leaf(rng.random((1, 3, 8, 8)))
        w = rng.standard_normal((1, 3, 8, 8))
        f = lambda: T.tsum(pfm(x) * w)
        inputs = {"x": x, **pfm.named_parameters()}
        assert worst(gradcheck(f, inputs, max_entries=6)).rel_error < 1e-3
