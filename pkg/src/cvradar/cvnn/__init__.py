"""Complex-valued tensor core: autodiff tensors, layers, gradient checks."""

from .tensor import CTensor, RTensor, Tensor, backward
from .layers import (
    ComplexBatchNorm,
    ComplexConv2d,
    DenseReal,
    complex_dtype,
    crelu,
    flatten_amp_phase,
    max_pool2d,
    real_dtype,
    softmax_cross_entropy,
)
from .gradcheck import GRAD_TOL, max_relative_error, numeric_grad, run_suite, run_suite_over_seeds

__all__ = [
    "CTensor",
    "RTensor",
    "Tensor",
    "backward",
    "ComplexBatchNorm",
    "ComplexConv2d",
    "DenseReal",
    "complex_dtype",
    "crelu",
    "flatten_amp_phase",
    "max_pool2d",
    "real_dtype",
    "softmax_cross_entropy",
    "GRAD_TOL",
    "max_relative_error",
    "numeric_grad",
    "run_suite",
    "run_suite_over_seeds",
]
