"""Complex and real tensors with reverse-mode automatic differentiation.

Every operation records a backward closure on its output, so calling
:func:`backward` on a scalar loss propagates cotangents through the whole
recorded graph.

Gradient convention: complex tensors are differentiated through their
(real, imaginary) decomposition.  For a complex tensor z = a + jb the
``grad`` slot stores dL/da + j*dL/db, which equals 2*dL/d(conj z) in
Wirtinger terms; for real-valued losses this yields the same parameter
updates either way.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import GraphError

_COMPLEX_DTYPES = (np.complex64, np.complex128)
_REAL_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense array plus gradient slot and autodiff bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward_fn: Optional[Callable] = None):
        self.data = data
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def accumulate_grad(self, g: np.ndarray) -> None:
        if np.iscomplexobj(g) and not np.iscomplexobj(self.data):
            raise TypeError("complex gradient delivered to a real tensor")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g.astype(self.data.dtype, copy=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        backward(self, grad)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, dtype={self.data.dtype})"


class CTensor(Tensor):
    """Complex-valued tensor; the currency of the complex layers."""

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward_fn=None):
        data = np.asarray(data)
        if data.dtype not in _COMPLEX_DTYPES:
            data = data.astype(np.complex128)
        super().__init__(data, requires_grad, parents, backward_fn)


class RTensor(Tensor):
    """Real-valued tensor, used after the amplitude/phase flatten."""

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward_fn=None):
        data = np.asarray(data)
        if data.dtype in _COMPLEX_DTYPES:
            raise TypeError("RTensor cannot hold complex data")
        if data.dtype not in _REAL_DTYPES:
            data = data.astype(np.float64)
        super().__init__(data, requires_grad, parents, backward_fn)


def needs_grad(t: Tensor) -> bool:
    """True when a backward pass has to deliver a gradient to ``t``."""
    return t.requires_grad or bool(t._parents)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(output: Tensor, grad=None) -> None:
    """Propagate cotangents from ``output`` to every tensor in its graph.

    With no explicit ``grad`` the output must be scalar and is seeded with
    one; passing a zero cotangent legitimately yields zero gradients
    everywhere.
    """
    if output._backward_fn is None and not output._parents:
        raise GraphError(
            "backward called before forward: this tensor has no recorded computation graph"
        )
    if grad is None:
        if output.size != 1:
            raise GraphError(
                f"implicit seed gradient requires a scalar output, got shape {output.shape}"
            )
        grad = np.ones_like(output.data)
    else:
        grad = np.asarray(grad)
        if grad.shape != output.data.shape:
            raise GraphError(
                f"seed gradient shape {grad.shape} does not match output shape {output.shape}"
            )
        grad = grad.astype(output.data.dtype, copy=False)
    output.accumulate_grad(grad)
    for node in reversed(_topo_order(output)):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)
