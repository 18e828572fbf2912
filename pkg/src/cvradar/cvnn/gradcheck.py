"""Finite-difference verification of every layer's recorded backward pass.

Each check builds a small float64 instance of one layer (or a composed
two-block micro net), scalarizes its output through a fixed random linear
projection, and compares analytic gradients against central differences
taken on the real and imaginary part of every coordinate.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    ComplexBatchNorm,
    ComplexConv2d,
    DenseReal,
    crelu,
    flatten_amp_phase,
    max_pool2d,
    softmax_cross_entropy,
)
from .tensor import CTensor, RTensor

GRAD_TOL = 1e-4
DEFAULT_STEP = 1e-6

# Relative-error denominators are floored so finite-difference roundoff
# (about 1e-9 at f64 with h = 1e-6) cannot dominate near-zero gradients.
_ERR_FLOOR = 1e-4


def numeric_grad(loss_fn, arr: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss_fn()`` with respect to ``arr``.

    ``arr`` is perturbed in place coordinate by coordinate (both components
    for complex arrays) and restored afterwards; the result follows the
    same dL/dRe + j*dL/dIm convention as the analytic gradients.
    """
    flat = arr.reshape(-1)
    grad = np.zeros_like(arr)
    gflat = grad.reshape(-1)
    is_complex = np.iscomplexobj(arr)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn()
        flat[i] = orig - h
        f_minus = loss_fn()
        d_re = (f_plus - f_minus) / (2.0 * h)
        if is_complex:
            flat[i] = orig + 1j * h
            f_plus = loss_fn()
            flat[i] = orig - 1j * h
            f_minus = loss_fn()
            d_im = (f_plus - f_minus) / (2.0 * h)
            gflat[i] = d_re + 1j * d_im
        else:
            gflat[i] = d_re
        flat[i] = orig
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst per-coordinate relative error between two gradients."""
    if np.iscomplexobj(analytic):
        a = np.concatenate([analytic.real.ravel(), analytic.imag.ravel()])
        n = np.concatenate([numeric.real.ravel(), numeric.imag.ravel()])
    else:
        a = analytic.ravel()
        n = numeric.ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), _ERR_FLOOR)
    return float(np.max(np.abs(a - n) / denom))


def _projection_loss(out, p_re: np.ndarray, p_im=None) -> RTensor:
    """Scalarize a layer output through a fixed linear projection."""
    if p_im is not None:
        val = float((out.data.real * p_re).sum() + (out.data.imag * p_im).sum())

        def _backward(g):
            out.accumulate_grad(g * (p_re + 1j * p_im))

    else:
        val = float((out.data * p_re).sum())

        def _backward(g):
            out.accumulate_grad(g * p_re)

    return RTensor(np.asarray(val), parents=(out,), backward_fn=_backward)


def _signed_margin(rng, shape, margin=0.05):
    """Values with |v| >= margin, keeping finite differences off kinks."""
    return np.sign(rng.standard_normal(shape)) * rng.uniform(margin, 1.0, shape)


def _complex_margin(rng, shape, margin=0.05):
    return _signed_margin(rng, shape, margin) + 1j * _signed_margin(rng, shape, margin)


def _fd_against_analytic(loss_fn, analytic_pairs, h):
    worst = 0.0
    for analytic, arr in analytic_pairs:
        fd = numeric_grad(loss_fn, arr, h)
        worst = max(worst, max_relative_error(analytic, fd))
    return worst


def _check_conv(rng, h):
    layer = ComplexConv2d(2, 3, 3, rng=rng, dtype=np.complex128)
    x_arr = (rng.standard_normal((2, 2, 6, 6)) + 1j * rng.standard_normal((2, 2, 6, 6)))
    p_re = rng.standard_normal((2, 3, 4, 4))
    p_im = rng.standard_normal((2, 3, 4, 4))

    def loss_fn():
        return float(_projection_loss(layer(CTensor(x_arr)), p_re, p_im).data)

    x_t = CTensor(x_arr, requires_grad=True)
    _projection_loss(layer(x_t), p_re, p_im).backward()
    pairs = [
        (layer.weight.grad, layer.weight.data),
        (layer.bias.grad, layer.bias.data),
        (x_t.grad, x_arr),
    ]
    return _fd_against_analytic(loss_fn, pairs, h)


def _check_maxpool(rng, h):
    x_arr = rng.standard_normal((2, 2, 6, 6)) + 1j * rng.standard_normal((2, 2, 6, 6))
    p_re = rng.standard_normal((2, 2, 3, 3))
    p_im = rng.standard_normal((2, 2, 3, 3))

    def loss_fn():
        return float(_projection_loss(max_pool2d(CTensor(x_arr)), p_re, p_im).data)

    x_t = CTensor(x_arr, requires_grad=True)
    _projection_loss(max_pool2d(x_t), p_re, p_im).backward()
    return _fd_against_analytic(loss_fn, [(x_t.grad, x_arr)], h)


def _check_crelu(rng, h):
    x_arr = _complex_margin(rng, (2, 3, 4, 4))
    p_re = rng.standard_normal((2, 3, 4, 4))
    p_im = rng.standard_normal((2, 3, 4, 4))

    def loss_fn():
        return float(_projection_loss(crelu(CTensor(x_arr)), p_re, p_im).data)

    x_t = CTensor(x_arr, requires_grad=True)
    _projection_loss(crelu(x_t), p_re, p_im).backward()
    return _fd_against_analytic(loss_fn, [(x_t.grad, x_arr)], h)


def _check_batchnorm(rng, h):
    layer = ComplexBatchNorm(5, dtype=np.complex128)
    layer.gamma.data[:] = _complex_margin(rng, 5, margin=0.2)
    layer.beta.data[:] = 0.1 * _complex_margin(rng, 5)
    x_arr = rng.standard_normal((8, 5)) + 1j * rng.standard_normal((8, 5))
    p_re = rng.standard_normal((8, 5))
    p_im = rng.standard_normal((8, 5))

    def loss_fn():
        return float(_projection_loss(layer(CTensor(x_arr)), p_re, p_im).data)

    x_t = CTensor(x_arr, requires_grad=True)
    _projection_loss(layer(x_t), p_re, p_im).backward()
    pairs = [
        (layer.gamma.grad, layer.gamma.data),
        (layer.beta.grad, layer.beta.data),
        (x_t.grad, x_arr),
    ]
    return _fd_against_analytic(loss_fn, pairs, h)


def _check_flatten(rng, h):
    x_arr = _complex_margin(rng, (2, 4))
    p = rng.standard_normal((2, 8))

    def loss_fn():
        return float(_projection_loss(flatten_amp_phase(CTensor(x_arr)), p).data)

    x_t = CTensor(x_arr, requires_grad=True)
    _projection_loss(flatten_amp_phase(x_t), p).backward()
    return _fd_against_analytic(loss_fn, [(x_t.grad, x_arr)], h)


def _check_dense(rng, h):
    layer = DenseReal(7, 4, rng=rng, dtype=np.float64)
    x_arr = rng.standard_normal((3, 7))
    p = rng.standard_normal((3, 4))

    def loss_fn():
        return float(_projection_loss(layer(RTensor(x_arr)), p).data)

    x_t = RTensor(x_arr, requires_grad=True)
    _projection_loss(layer(x_t), p).backward()
    pairs = [
        (layer.weight.grad, layer.weight.data),
        (layer.bias.grad, layer.bias.data),
        (x_t.grad, x_arr),
    ]
    return _fd_against_analytic(loss_fn, pairs, h)


def _check_softmax_ce(rng, h):
    z_arr = rng.standard_normal((4, 5))
    targets = rng.integers(0, 5, 4)

    def loss_fn():
        return float(softmax_cross_entropy(RTensor(z_arr), targets).data)

    z_t = RTensor(z_arr, requires_grad=True)
    softmax_cross_entropy(z_t, targets).backward()
    return _fd_against_analytic(loss_fn, [(z_t.grad, z_arr)], h)


def _check_micro_net(rng, h):
    """Two conv blocks, pool, flatten, dense head, cross-entropy."""
    conv1 = ComplexConv2d(1, 2, 3, rng=rng, dtype=np.complex128)
    bn1 = ComplexBatchNorm(2, dtype=np.complex128)
    conv2 = ComplexConv2d(2, 2, 3, rng=rng, dtype=np.complex128)
    bn2 = ComplexBatchNorm(2, dtype=np.complex128)
    dense = DenseReal(16, 5, rng=rng, dtype=np.float64)
    bn1.gamma.data[:] = _complex_margin(rng, 2, margin=0.2)
    bn2.gamma.data[:] = _complex_margin(rng, 2, margin=0.2)
    x_arr = rng.standard_normal((2, 1, 8, 8)) + 1j * rng.standard_normal((2, 1, 8, 8))
    targets = rng.integers(0, 5, 2)

    def forward(x_t):
        z = crelu(bn1(conv1(x_t)))
        z = crelu(bn2(conv2(z)))
        z = max_pool2d(z)
        logits = dense(flatten_amp_phase(z))
        return softmax_cross_entropy(logits, targets)

    def loss_fn():
        return float(forward(CTensor(x_arr)).data)

    params = conv1.params() + bn1.params() + conv2.params() + bn2.params() + dense.params()
    x_t = CTensor(x_arr, requires_grad=True)
    forward(x_t).backward()
    pairs = [(p.grad, p.data) for p in params] + [(x_t.grad, x_arr)]
    return _fd_against_analytic(loss_fn, pairs, h)


LAYER_CHECKS = (
    ("complex_conv2d", _check_conv),
    ("complex_maxpool2d", _check_maxpool),
    ("crelu", _check_crelu),
    ("complex_batchnorm", _check_batchnorm),
    ("flatten_amp_phase", _check_flatten),
    ("dense_real", _check_dense),
    ("softmax_cross_entropy", _check_softmax_ce),
    ("micro_net", _check_micro_net),
)


def run_suite(seed: int = 0, h: float = DEFAULT_STEP) -> dict[str, float]:
    """Run every layer check once; returns worst relative error per layer."""
    results = {}
    for idx, (name, check) in enumerate(LAYER_CHECKS):
        rng = np.random.default_rng([seed, idx])
        results[name] = check(rng, h)
    return results


def run_suite_over_seeds(seeds, h: float = DEFAULT_STEP) -> dict[str, float]:
    """Worst relative error per layer across several seeds."""
    worst: dict[str, float] = {}
    for seed in seeds:
        for name, err in run_suite(seed, h).items():
            worst[name] = max(worst.get(name, 0.0), err)
    return worst
