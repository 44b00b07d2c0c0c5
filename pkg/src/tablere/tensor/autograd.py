"""A small reverse-mode autograd node over numpy arrays."""
from __future__ import annotations

import numpy as np

from ..errors import UsageError


class Tensor:
    """Dense real array with an optional gradient buffer.

    Results of differentiable ops remember their parents and a closure that
    pushes the output gradient back to them. Leaves created with
    ``requires_grad=True`` receive gradients in :attr:`grad`.
    """

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op=""):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True).reshape(self.shape)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Fill ``grad`` on every leaf that requires it.

        A scalar output is seeded with 1. Calling this on a tensor that was
        not produced by a differentiable op raises :class:`UsageError`.
        """
        if self._backward is None and not self.requires_grad:
            raise UsageError("backward() called on a tensor with no forward graph")
        if grad is None:
            if self.data.size != 1:
                raise UsageError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        # interior gradients are transient; leaves keep theirs
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def needs_grad(*tensors):
    return any(t.requires_grad or t._backward is not None for t in tensors)
