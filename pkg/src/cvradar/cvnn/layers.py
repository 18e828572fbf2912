"""Complex-valued network layers with recorded backward passes.

Convolution and the dense head carry parameters and are classes; the
parameter-free operations (cReLU, modulus max pooling, amplitude/phase
flatten, softmax cross-entropy) are plain functions.  All layers build the
autodiff graph described in :mod:`cvradar.cvnn.tensor`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import CTensor, RTensor, needs_grad

_DTYPE_PAIRS = {np.dtype(np.complex64): np.float32, np.dtype(np.complex128): np.float64}


def complex_dtype(precision: str):
    """Map a precision tag ("f32" or "f64") to the matching complex dtype."""
    try:
        return {"f32": np.complex64, "f64": np.complex128}[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}, expected 'f32' or 'f64'") from None


def real_dtype(precision: str):
    try:
        return {"f32": np.float32, "f64": np.float64}[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}, expected 'f32' or 'f64'") from None


def _corr2d(x: np.ndarray, w: np.ndarray):
    """Valid 2-D cross-correlation of (B, C, H, W) with (O, C, kh, kw).

    Runs one GEMM per kernel tap on channels-last slabs, which keeps every
    copy a run of contiguous rows.  Returns the (B, O, OH, OW) output and
    the channels-last input copy reused by the backward pass.
    """
    b, c, h, width = x.shape
    o, _, kh, kw = w.shape
    oh, ow = h - kh + 1, width - kw + 1
    x_cl = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    w_taps = w.transpose(2, 3, 1, 0)  # (kh, kw, C, O)
    out = np.zeros((b * oh * ow, o), dtype=x.dtype)
    slab = np.empty((b, oh, ow, c), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            slab[...] = x_cl[:, u:u + oh, v:v + ow, :]
            out += slab.reshape(-1, c) @ w_taps[u, v]
    out = np.ascontiguousarray(out.reshape(b, oh, ow, o).transpose(0, 3, 1, 2))
    return out, x_cl


def _conv2d_param_grads(g: np.ndarray, x_cl: np.ndarray, kernel_shape: tuple):
    """Weight and bias gradients of the complex convolution.

    Under the real-pair convention the cotangent of w in out = w * x is
    g_out * conj(x); conj(A @ B) = conj(A) @ conj(B) lets the large slab
    enter unconjugated.
    """
    o, c, kh, kw = kernel_shape
    b = g.shape[0]
    oh, ow = g.shape[2], g.shape[3]
    g_flat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
    g_conj = np.conj(g_flat)
    grad_w = np.empty(kernel_shape, dtype=g.dtype)
    slab = np.empty((b, oh, ow, c), dtype=g.dtype)
    for u in range(kh):
        for v in range(kw):
            slab[...] = x_cl[:, u:u + oh, v:v + ow, :]
            grad_w[:, :, u, v] = np.conj(g_conj.T @ slab.reshape(-1, c))
    grad_b = g.sum(axis=(0, 2, 3))
    return grad_w, grad_b


def _conv2d_input_grad(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Input gradient: full correlation of g with the flipped conjugate kernel."""
    _, _, kh, kw = w.shape
    gp = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    w_t = np.ascontiguousarray(np.conj(w[:, :, ::-1, ::-1]).transpose(1, 0, 2, 3))
    grad_x, _ = _corr2d(gp, w_t)
    return grad_x


class ComplexConv2d:
    """Complex 2-D convolution, stride 1, no padding, full complex products.

    Weights are complex-Glorot initialized: real and imaginary parts each
    drawn from N(0, 1/(2*fan_in)) so activation variance is preserved.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: np.random.Generator | None = None, dtype=np.complex64):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        std = np.sqrt(1.0 / (2.0 * in_channels * kernel_size * kernel_size))
        w = rng.normal(0.0, std, shape) + 1j * rng.normal(0.0, std, shape)
        self.weight = CTensor(w.astype(dtype), requires_grad=True)
        self.bias = CTensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x: CTensor) -> CTensor:
        if x.data.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv2d expected input (B, {self.in_channels}, H, W), got {x.shape}"
            )
        k = self.kernel_size
        if x.shape[2] < k or x.shape[3] < k:
            raise ShapeError(
                f"conv2d spatial dims {x.shape[2]}x{x.shape[3]} smaller than {k}x{k} kernel"
            )
        out_data, x_cl = _corr2d(x.data, self.weight.data)
        out_data += self.bias.data.reshape(1, -1, 1, 1)
        weight, bias = self.weight, self.bias
        kernel_shape = weight.data.shape

        def _backward(g):
            if needs_grad(weight) or needs_grad(bias):
                grad_w, grad_b = _conv2d_param_grads(g, x_cl, kernel_shape)
                weight.accumulate_grad(grad_w)
                bias.accumulate_grad(grad_b)
            if needs_grad(x):
                x.accumulate_grad(_conv2d_input_grad(g, weight.data))

        return CTensor(out_data, parents=(x, weight, bias), backward_fn=_backward)


def max_pool2d(x: CTensor, pool: int = 2) -> CTensor:
    """Modulus-argmax pooling: each window keeps its largest-modulus value.

    Phase is preserved, ties go to the first element in row-major window
    order, and the gradient routes only to the selected element.  Trailing
    rows/columns that do not fill a window are dropped.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2d expected (B, C, H, W), got {x.shape}")
    b, c, h, w = x.shape
    h2, w2 = h // pool, w // pool
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"max_pool2d input {h}x{w} smaller than {pool}x{pool} window")
    core = x.data[:, :, : h2 * pool, : w2 * pool]
    win = np.ascontiguousarray(
        core.reshape(b, c, h2, pool, w2, pool).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(b, c, h2, w2, pool * pool)
    sel = np.argmax(np.abs(win), axis=-1)
    out = np.take_along_axis(win, sel[..., None], axis=-1)[..., 0]

    def _backward(g):
        if not needs_grad(x):
            return
        gw = np.zeros_like(win)
        np.put_along_axis(gw, sel[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, : h2 * pool, : w2 * pool] = (
            gw.reshape(b, c, h2, w2, pool, pool).transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h2 * pool, w2 * pool)
        )
        x.accumulate_grad(gx)

    return CTensor(out, parents=(x,), backward_fn=_backward)


def crelu(x: CTensor) -> CTensor:
    """Pass z through only where both Re{z} >= 0 and Im{z} >= 0, else zero."""
    mask = (x.data.real >= 0) & (x.data.imag >= 0)
    out = np.where(mask, x.data, 0)

    def _backward(g):
        if needs_grad(x):
            x.accumulate_grad(np.where(mask, g, 0))

    return CTensor(out, parents=(x,), backward_fn=_backward)


class ComplexBatchNorm:
    """Batch normalization applied to real and imaginary channels separately.

    Statistics reduce over every axis except the feature axis 1, so a
    (B, F) batch is normalized per feature over the batch and a (B, C, H, W)
    feature map per channel over batch and space.  ``gamma``/``beta`` hold
    the per-channel affine pairs packed as complex numbers (real part acts
    on the real channel, imaginary part on the imaginary channel); the
    running-variance buffer packs the two channel variances the same way.
    """

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.complex64):
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = CTensor(np.full(num_features, 1.0 + 1.0j, dtype=dtype), requires_grad=True)
        self.beta = CTensor(np.zeros(num_features, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.full(num_features, 1.0 + 1.0j, dtype=dtype)
        self.training = True

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def __call__(self, x: CTensor) -> CTensor:
        if x.data.ndim < 2 or x.shape[1] != self.num_features:
            raise ShapeError(
                f"batchnorm expected feature axis of size {self.num_features}, got input {x.shape}"
            )
        axes = (0,) + tuple(range(2, x.data.ndim))
        bshape = (1, self.num_features) + (1,) * (x.data.ndim - 2)
        rdt = _DTYPE_PAIRS[x.data.dtype]

        if self.training:
            if x.shape[0] < 2:
                raise ShapeError(
                    f"batchnorm train mode needs a batch of >= 2, got {x.shape[0]} "
                    "(batch variance undefined)"
                )
            mu = x.data.mean(axis=axes, keepdims=True)
            xc = x.data - mu
            var_re = np.mean(xc.real ** 2, axis=axes, keepdims=True).astype(rdt, copy=False)
            var_im = np.mean(xc.imag ** 2, axis=axes, keepdims=True).astype(rdt, copy=False)
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mu.reshape(-1)).astype(
                x.data.dtype, copy=False
            )
            batch_var = (var_re + 1j * var_im).reshape(-1)
            self.running_var = ((1 - m) * self.running_var + m * batch_var).astype(
                x.data.dtype, copy=False
            )
        else:
            mu = self.running_mean.reshape(bshape)
            xc = x.data - mu
            var_re = self.running_var.real.reshape(bshape)
            var_im = self.running_var.imag.reshape(bshape)

        inv_re = 1.0 / np.sqrt(var_re + self.eps)
        inv_im = 1.0 / np.sqrt(var_im + self.eps)
        xhat_re = xc.real * inv_re
        xhat_im = xc.imag * inv_im
        g_re = self.gamma.data.real.reshape(bshape)
        g_im = self.gamma.data.imag.reshape(bshape)
        out = (xhat_re * g_re + self.beta.data.real.reshape(bshape)) + 1j * (
            xhat_im * g_im + self.beta.data.imag.reshape(bshape)
        )
        gamma, beta = self.gamma, self.beta
        training = self.training

        def _backward(g):
            if needs_grad(gamma):
                gamma.accumulate_grad(
                    (g.real * xhat_re).sum(axis=axes) + 1j * (g.imag * xhat_im).sum(axis=axes)
                )
            if needs_grad(beta):
                beta.accumulate_grad(g.sum(axis=axes))
            if not needs_grad(x):
                return
            gxh_re = g.real * g_re
            gxh_im = g.imag * g_im
            if training:
                gx_re = inv_re * (
                    gxh_re
                    - gxh_re.mean(axis=axes, keepdims=True)
                    - xhat_re * (gxh_re * xhat_re).mean(axis=axes, keepdims=True)
                )
                gx_im = inv_im * (
                    gxh_im
                    - gxh_im.mean(axis=axes, keepdims=True)
                    - xhat_im * (gxh_im * xhat_im).mean(axis=axes, keepdims=True)
                )
            else:
                gx_re = gxh_re * inv_re
                gx_im = gxh_im * inv_im
            x.accumulate_grad(gx_re + 1j * gx_im)

        return CTensor(out.astype(x.data.dtype, copy=False),
                       parents=(x, gamma, beta), backward_fn=_backward)


def flatten_amp_phase(x: CTensor) -> RTensor:
    """Convert complex features to [all moduli, all phases] real features.

    For inputs with two or more axes, axis 0 is the batch axis and each
    sample flattens to 2F values; a bare vector flattens as one sample.
    Phases lie in (-pi, pi] with arg(0) defined as 0, and the z = 0
    singularity gets a zero gradient.
    """
    data = x.data
    batched = data.ndim >= 2
    flat = data.reshape(data.shape[0], -1) if batched else data.reshape(1, -1)
    amp = np.abs(flat)
    ph = np.angle(flat)
    minus_pi = np.asarray(-np.pi, dtype=ph.dtype)
    ph = np.where(ph == minus_pi, -minus_pi, ph)
    out = np.concatenate([amp, ph], axis=1)
    if not batched:
        out = out[0]
    n_feat = flat.shape[1]

    def _backward(g):
        if not needs_grad(x):
            return
        g2 = g.reshape(1, -1) if not batched else g
        g_amp = g2[:, :n_feat]
        g_ph = g2[:, n_feat:]
        inv_r = np.zeros_like(amp)
        np.divide(1.0, amp, out=inv_r, where=amp > 0)
        inv_r2 = inv_r * inv_r
        zr = flat.real
        zi = flat.imag
        gre = g_amp * zr * inv_r - g_ph * zi * inv_r2
        gim = g_amp * zi * inv_r + g_ph * zr * inv_r2
        x.accumulate_grad((gre + 1j * gim).reshape(x.data.shape))

    return RTensor(out, parents=(x,), backward_fn=_backward)


class DenseReal:
    """Real affine map W x + b used as the classification head."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        limit = np.sqrt(6.0 / (in_features + out_features))
        w = rng.uniform(-limit, limit, (out_features, in_features))
        self.weight = RTensor(w.astype(dtype), requires_grad=True)
        self.bias = RTensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def params(self):
        return [self.weight, self.bias]

    def __call__(self, x: RTensor) -> RTensor:
        if x.data.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expected input (B, {self.in_features}), got {x.shape}"
            )
        out = x.data @ self.weight.data.T + self.bias.data
        weight, bias = self.weight, self.bias

        def _backward(g):
            if needs_grad(weight):
                weight.accumulate_grad(g.T @ x.data)
            if needs_grad(bias):
                bias.accumulate_grad(g.sum(axis=0))
            if needs_grad(x):
                x.accumulate_grad(g @ weight.data)

        return RTensor(out, parents=(x, weight, bias), backward_fn=_backward)


def softmax_cross_entropy(logits: RTensor, targets) -> RTensor:
    """Batch-averaged cross-entropy of softmax(logits) against class ids.

    Numerically stabilized by max subtraction; the recorded gradient is
    (softmax - onehot) / B.
    """
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"expected logits of shape (B, C), got {z.shape}")
    t = np.asarray(targets, dtype=np.int64)
    b, c = z.shape
    if t.shape != (b,):
        raise ShapeError(f"expected {b} targets, got shape {t.shape}")
    if t.min() < 0 or t.max() >= c:
        raise ValueError(f"targets must lie in [0, {c}), got range [{t.min()}, {t.max()}]")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    probs = np.exp(zs - lse)
    nll = lse[:, 0] - zs[np.arange(b), t]
    loss = np.asarray(nll.mean(), dtype=z.dtype)

    def _backward(g):
        if not needs_grad(logits):
            return
        onehot = np.zeros_like(probs)
        onehot[np.arange(b), t] = 1.0
        logits.accumulate_grad((probs - onehot) * (g / b))

    return RTensor(loss, parents=(logits,), backward_fn=_backward)
