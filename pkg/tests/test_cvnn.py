import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvradar.cvnn.gradcheck import GRAD_TOL, run_suite, run_suite_over_seeds
from cvradar.cvnn.layers import (
    ComplexBatchNorm,
    ComplexConv2d,
    DenseReal,
    crelu,
    flatten_amp_phase,
    max_pool2d,
    softmax_cross_entropy,
)
from cvradar.cvnn.tensor import CTensor, RTensor, backward
from cvradar.errors import GraphError, ShapeError


def conv2d_brute_force(x, w, b):
    """Direct six-nested-loop evaluation of the complex valid correlation."""
    bn, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    out = np.zeros((bn, co, h - kh + 1, wd - kw + 1), dtype=complex)
    for s in range(bn):
        for o in range(co):
            for y in range(h - kh + 1):
                for xx in range(wd - kw + 1):
                    acc = 0 + 0j
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, c, u, v] * x[s, c, y + u, xx + v]
                    out[s, o, y, xx] = acc + b[o]
    return out


class TestComplexConv2d:
    def test_identity_kernel(self):
        layer = ComplexConv2d(1, 1, 1, dtype=np.complex128)
        layer.weight.data[:] = 1.0 + 0j
        layer.bias.data[:] = 0
        x = CTensor(np.arange(8, dtype=complex).reshape(1, 1, 2, 4) + 0.5j)
        out = layer(x)
        assert np.array_equal(out.data, x.data)

    def test_multiplication_by_j(self):
        layer = ComplexConv2d(1, 1, 1, dtype=np.complex128)
        layer.weight.data[:] = 1j
        layer.bias.data[:] = 0
        out = layer(CTensor(np.full((1, 1, 1, 1), 3 + 4j)))
        assert np.allclose(out.data, -4 + 3j)

    def test_against_brute_force(self):
        rng = np.random.default_rng(4)
        layer = ComplexConv2d(2, 3, 3, rng=rng, dtype=np.complex128)
        x = rng.standard_normal((2, 2, 8, 8)) + 1j * rng.standard_normal((2, 2, 8, 8))
        out = layer(CTensor(x))
        expected = conv2d_brute_force(x, layer.weight.data, layer.bias.data)
        assert np.max(np.abs(out.data - expected)) < 1e-12

    def test_too_small_input(self):
        layer = ComplexConv2d(1, 1, 5)
        with pytest.raises(ShapeError, match="smaller"):
            layer(CTensor(np.zeros((1, 1, 4, 4), dtype=np.complex64)))

    def test_wrong_channel_count(self):
        layer = ComplexConv2d(2, 1, 3)
        with pytest.raises(ShapeError):
            layer(CTensor(np.zeros((1, 1, 8, 8), dtype=np.complex64)))


class TestMaxPool:
    def test_modulus_argmax(self):
        window = np.array([[1 + 0j, 0 + 2j], [0.5 + 0j, -1 + 0j]]).reshape(1, 1, 2, 2)
        out = max_pool2d(CTensor(window))
        assert out.data[0, 0, 0, 0] == 0 + 2j

    def test_tie_routes_to_first_row_major(self):
        window = np.full((1, 1, 2, 2), 1 + 1j)
        x = CTensor(window, requires_grad=True)
        out = max_pool2d(x)
        assert out.data[0, 0, 0, 0] == 1 + 1j
        backward(out, np.full((1, 1, 1, 1), 1 + 1j))
        expected = np.zeros((1, 1, 2, 2), dtype=complex)
        expected[0, 0, 0, 0] = 1 + 1j
        assert np.array_equal(x.grad, expected)

    def test_against_window_scan(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1, 1, 6, 6)) + 1j * rng.standard_normal((1, 1, 6, 6))
        out = max_pool2d(CTensor(x)).data[0, 0]
        for i in range(3):
            for j in range(3):
                window = x[0, 0, 2 * i:2 * i + 2, 2 * j:2 * j + 2].ravel()
                assert out[i, j] == window[np.argmax(np.abs(window))]

    def test_output_drawn_from_window(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 3, 7, 9)) + 1j * rng.standard_normal((2, 3, 7, 9))
        out = max_pool2d(CTensor(x)).data
        assert out.shape == (2, 3, 3, 4)  # trailing odd row/column dropped
        for b in range(2):
            for c in range(3):
                for i in range(3):
                    for j in range(4):
                        window = x[b, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].ravel()
                        assert out[b, c, i, j] in window
                        assert np.abs(out[b, c, i, j]) >= np.abs(window).max() - 1e-12


class TestCRelu:
    @pytest.mark.parametrize("z,expected", [
        (1 + 2j, 1 + 2j),          # both parts nonnegative
        (1 - 0.1j, 0),             # negative imaginary part kills the value
        (-1 + 2j, 0),              # negative real part
        (-1 - 2j, 0),              # both negative
        (0 + 0j, 0 + 0j),          # boundary is inclusive
        (0 + 1j, 0 + 1j),          # Re = 0 passes
        (1 + 0j, 1 + 0j),          # Im = 0 passes
        (0 - 1j, 0),               # Re = 0 but Im < 0
    ])
    def test_case_table(self, z, expected):
        out = crelu(CTensor(np.array([z])))
        assert out.data[0] == expected

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_output_is_input_or_zero_and_fixed_point(self, pairs):
        z = np.array([complex(a, b) for a, b in pairs])
        out = crelu(CTensor(z)).data
        assert np.all((out == z) | (out == 0))
        again = crelu(CTensor(out)).data
        assert np.array_equal(again, out)

    def test_gradient_mask(self):
        z = np.array([1 + 2j, -1 + 2j, 3 - 1j, 0.5 + 0.5j])
        x = CTensor(z, requires_grad=True)
        out = crelu(x)
        backward(out, np.ones(4, dtype=complex))
        assert np.array_equal(x.grad, np.array([1 + 0j, 0, 0, 1 + 0j]))


class TestComplexBatchNorm:
    def test_two_point_normalization(self):
        bn = ComplexBatchNorm(1, eps=1e-12, dtype=np.complex128)
        x = CTensor(np.array([[1.0 + 0j], [3.0 + 0j]]))
        out = bn(x)
        assert np.allclose(out.data.real.ravel(), [-1.0, 1.0], atol=1e-5)

    def test_purely_imaginary_batch(self):
        bn = ComplexBatchNorm(2, dtype=np.complex128)
        bn.beta.data[:] = 0.25 + 0.5j
        rng = np.random.default_rng(7)
        x = CTensor(1j * rng.standard_normal((6, 2)))
        out = bn(x)
        # real channel has zero variance: output real part is just beta_re
        assert np.allclose(out.data.real, 0.25, atol=1e-12)

    def test_batch_statistics(self):
        rng = np.random.default_rng(8)
        bn = ComplexBatchNorm(8, dtype=np.complex128)  # gamma=1+1j, beta=0: pre-affine
        x = CTensor(rng.standard_normal((16, 8)) + 1j * rng.standard_normal((16, 8)))
        out = bn(x).data
        for part in (out.real, out.imag):
            assert np.max(np.abs(part.mean(axis=0))) < 1e-6
            assert np.max(np.abs(part.var(axis=0) - 1.0)) < 1e-3

    def test_train_requires_batch_of_two(self):
        bn = ComplexBatchNorm(3)
        with pytest.raises(ShapeError, match="variance undefined"):
            bn(CTensor(np.ones((1, 3), dtype=np.complex64)))

    def test_eval_mode_uses_running_stats(self):
        rng = np.random.default_rng(9)
        bn = ComplexBatchNorm(4, dtype=np.complex128)
        for _ in range(50):
            bn(CTensor(2.0 + rng.standard_normal((32, 4)) + 1j * rng.standard_normal((32, 4))))
        bn.training = False
        single = CTensor((2.0 + 0j) * np.ones((1, 4)))
        out = bn(single).data
        # running mean approaches 2 + 0j, so the normalized output is near zero
        assert np.max(np.abs(out.real)) < 0.2

    def test_feature_map_statistics(self):
        rng = np.random.default_rng(10)
        bn = ComplexBatchNorm(3, dtype=np.complex128)
        x = CTensor(rng.standard_normal((4, 3, 6, 6)) + 1j * rng.standard_normal((4, 3, 6, 6)))
        out = bn(x).data
        for c in range(3):
            assert abs(out.real[:, c].mean()) < 1e-6
            assert abs(out.real[:, c].var() - 1.0) < 1e-2


class TestFlattenAmpPhase:
    def test_single_value(self):
        out = flatten_amp_phase(CTensor(np.array([1 + 1j])))
        assert np.allclose(out.data, [np.sqrt(2), np.pi / 4])

    def test_zero_maps_to_zero_with_zero_gradient(self):
        x = CTensor(np.array([0 + 0j]), requires_grad=True)
        out = flatten_amp_phase(x)
        assert np.array_equal(out.data, [0.0, 0.0])
        backward(out, np.array([1.0, 1.0]))
        assert np.array_equal(x.grad, np.array([0 + 0j]))

    def test_polar_round_trip(self):
        rng = np.random.default_rng(11)
        z = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        out = flatten_amp_phase(CTensor(z)).data
        amp, ph = out[:10], out[10:]
        assert np.max(np.abs(amp * np.exp(1j * ph) - z)) < 1e-12

    def test_phase_range_excludes_minus_pi(self):
        z = np.array([complex(-1.0, -0.0), -2 + 0j, 1 + 0j])
        out = flatten_amp_phase(CTensor(z)).data
        ph = out[3:]
        assert np.all(ph > -np.pi)
        assert np.all(ph <= np.pi)
        assert ph[0] == pytest.approx(np.pi)

    def test_block_layout_batched(self):
        z = np.array([[1 + 0j, 0 + 2j], [3 + 0j, 0 + 4j]])
        out = flatten_amp_phase(CTensor(z)).data
        assert out.shape == (2, 4)
        assert np.allclose(out[:, :2], [[1, 2], [3, 4]])


class TestDenseReal:
    def test_identity(self):
        layer = DenseReal(3, 3, dtype=np.float64)
        layer.weight.data[:] = np.eye(3)
        layer.bias.data[:] = 0
        x = RTensor(np.array([[1.0, 2.0, 3.0]]))
        assert np.array_equal(layer(x).data, x.data)

    def test_zero_input_gives_bias(self):
        layer = DenseReal(4, 2, dtype=np.float64)
        layer.bias.data[:] = [0.5, -1.5]
        out = layer(RTensor(np.zeros((1, 4))))
        assert np.allclose(out.data, [[0.5, -1.5]])

    def test_matmul_oracle(self):
        rng = np.random.default_rng(12)
        layer = DenseReal(7, 4, rng=rng, dtype=np.float64)
        x = rng.standard_normal((3, 7))
        out = layer(RTensor(x))
        expected = x @ layer.weight.data.T + layer.bias.data
        assert np.max(np.abs(out.data - expected)) < 1e-12


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy(RTensor(np.zeros((3, 5))), [0, 2, 4])
        assert float(loss.data) == pytest.approx(np.log(5), abs=1e-9)

    def test_saturated_correct_prediction(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 1e6
        loss = softmax_cross_entropy(RTensor(logits), [2])
        assert float(loss.data) == pytest.approx(0.0, abs=1e-9)

    def test_gradient_is_probs_minus_onehot(self):
        rng = np.random.default_rng(13)
        z = rng.standard_normal((4, 5))
        t = np.array([0, 1, 2, 3])
        logits = RTensor(z, requires_grad=True)
        loss = softmax_cross_entropy(logits, t)
        loss.backward()
        e = np.exp(z - z.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        onehot = np.eye(5)[t]
        assert np.max(np.abs(logits.grad - (p - onehot) / 4)) < 1e-12

    def test_bad_targets(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(RTensor(np.zeros((2, 3))), [0, 3])


class TestBackward:
    def test_modulus_squared_derivative(self):
        # L = |w|^2 seeded through the flatten: dL/dRe = 2 Re, dL/dIm = 2 Im
        w = CTensor(np.array([3 + 4j]), requires_grad=True)
        out = flatten_amp_phase(w)
        amp = out.data[0]
        backward(out, np.array([2.0 * amp, 0.0]))
        assert w.grad[0] == pytest.approx(6 + 8j)

    def test_zero_upstream_gradient(self):
        rng = np.random.default_rng(14)
        layer = ComplexConv2d(1, 2, 3, rng=rng, dtype=np.complex128)
        x = CTensor(rng.standard_normal((1, 1, 5, 5)) + 0j)
        out = layer(x)
        backward(out, np.zeros_like(out.data))
        assert np.all(layer.weight.grad == 0)
        assert np.all(layer.bias.grad == 0)

    def test_backward_before_forward(self):
        with pytest.raises(GraphError, match="before forward"):
            CTensor(np.ones(3, dtype=np.complex64)).backward()

    def test_implicit_seed_requires_scalar(self):
        layer = DenseReal(2, 2, dtype=np.float64)
        out = layer(RTensor(np.ones((1, 2))))
        with pytest.raises(GraphError, match="scalar"):
            out.backward()

    def test_gradient_accumulates(self):
        x = CTensor(np.array([1 + 1j]), requires_grad=True)
        out1 = crelu(x)
        out2 = crelu(x)
        backward(out1, np.array([1 + 0j]))
        backward(out2, np.array([1 + 0j]))
        assert x.grad[0] == 2 + 0j


class TestGradientSuite:
    def test_every_layer_passes_finite_differences(self):
        worst = run_suite_over_seeds(range(5))
        assert set(worst) == {
            "complex_conv2d", "complex_maxpool2d", "crelu", "complex_batchnorm",
            "flatten_amp_phase", "dense_real", "softmax_cross_entropy", "micro_net",
        }
        for name, err in worst.items():
            assert err < GRAD_TOL, f"{name}: {err}"

    def test_single_seed_interface(self):
        res = run_suite(seed=0)
        assert all(err < GRAD_TOL for err in res.values())


class TestDeterminism:
    def test_identical_seeds_identical_forward(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((2, 1, 8, 8)) + 1j * rng.standard_normal((2, 1, 8, 8))
        outs = []
        for _ in range(2):
            layer = ComplexConv2d(1, 2, 3, rng=np.random.default_rng(5), dtype=np.complex128)
            out = max_pool2d(crelu(layer(CTensor(x))))
            outs.append(out.data.tobytes())
        assert outs[0] == outs[1]
