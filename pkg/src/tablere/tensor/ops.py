"""Differentiable layer ops.

Sequence ops accept either a single sequence ``(T, d)`` or a batch
``(B, T, d)``; the output keeps the same leading layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ConfigError, DataError, ShapeError
from .autograd import Tensor, as_tensor, needs_grad


@dataclass
class ConvParams:
    filters: Tensor  # (F, k, d)
    bias: Tensor  # (F,)

    @property
    def n_filters(self):
        return self.filters.shape[0]

    @property
    def width(self):
        return self.filters.shape[1]

    @property
    def input_dim(self):
        return self.filters.shape[2]

    def param_count(self):
        return self.filters.size + self.bias.size


@dataclass
class LstmParams:
    """Gate blocks are packed ``[input, forget, candidate, output]``."""

    kernel: Tensor  # (i, 4u)
    recurrent: Tensor  # (u, 4u)
    bias: Tensor  # (4u,)

    @property
    def units(self):
        return self.recurrent.shape[0]

    @property
    def input_dim(self):
        return self.kernel.shape[0]

    def gate(self, name):
        """Per-gate ``(input weights u x i, recurrent weights u x u, bias u)``."""
        k = ("input", "forget", "candidate", "output").index(name)
        u = self.units
        cols = slice(k * u, (k + 1) * u)
        return (
            self.kernel.data[:, cols].T,
            self.recurrent.data[:, cols].T,
            self.bias.data[cols],
        )

    def param_count(self):
        return self.kernel.size + self.recurrent.size + self.bias.size


def _batched(x):
    """Lift ``(T, d)`` to ``(1, T, d)``; return the array and an unlift fn."""
    if x.ndim == 2:
        return x[None], lambda a: a[0]
    if x.ndim == 3:
        return x, lambda a: a
    raise ShapeError(f"expected a (T, d) or (B, T, d) sequence, got shape {x.shape}")


def tsum(x):
    x = as_tensor(x)
    out = Tensor(x.data.sum(dtype=x.dtype), _parents=(x,), _op="sum")
    if needs_grad(x):
        out._backward = lambda g: x._accumulate(np.broadcast_to(g, x.shape))
    return out


def mul(x, const):
    """Elementwise product with a constant (non-differentiated) array."""
    x = as_tensor(x)
    c = np.asarray(const, dtype=x.dtype)
    out = Tensor(x.data * c, _parents=(x,), _op="mul")
    if needs_grad(x):
        out._backward = lambda g: x._accumulate(g * c)
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), _parents=(x,), _op="reshape")
    if needs_grad(x):
        out._backward = lambda g: x._accumulate(g.reshape(x.shape))
    return out


def flatten(x):
    """Flatten everything but a leading batch axis (3-D input) or everything (2-D)."""
    x = as_tensor(x)
    return reshape(x, (x.shape[0], -1) if x.data.ndim == 3 else (-1,))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tensors, _op="concat")
    if needs_grad(*tensors):
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def backward(g):
            for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
                if needs_grad(t):
                    t._accumulate(piece)

        out._backward = backward
    return out


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0).astype(x.dtype, copy=False), _parents=(x,), _op="relu")
    if needs_grad(x):
        out._backward = lambda g: x._accumulate(g * mask)
    return out


def conv1d_same(x, params: ConvParams):
    """Zero-padded 1-D convolution whose output length equals the input length.

    The window for step ``t`` covers ``t - (k-1)//2 .. t + ceil((k-1)/2)``, so
    an even width puts the extra pad row on the right. No activation.
    """
    x = as_tensor(x)
    w, b = params.filters, params.bias
    xb, unlift = _batched(x.data)
    n_f, k, d = w.shape
    if xb.shape[-1] != d:
        raise ShapeError(f"conv1d_same: input feature dim {xb.shape[-1]} != filter dim {d}")
    if b.shape != (n_f,):
        raise ShapeError(f"conv1d_same: bias shape {b.shape} != ({n_f},)")
    steps = xb.shape[1]
    left = (k - 1) // 2
    right = k - 1 - left
    xp = np.pad(xb, ((0, 0), (left, right), (0, 0)))
    acc = np.zeros((xb.shape[0], steps, n_f), dtype=np.result_type(xb, w.data))
    for j in range(k):
        acc += xp[:, j : j + steps] @ w.data[:, j, :].T
    acc += b.data
    out = Tensor(unlift(acc), _parents=(x, w, b), _op="conv1d_same")
    if needs_grad(x, w, b):

        def backward(g):
            gb, _ = _batched(g)
            if needs_grad(w):
                w._accumulate(np.stack([np.einsum("btf,btd->fd", gb, xp[:, j : j + steps]) for j in range(k)], axis=1))
            if needs_grad(b):
                b._accumulate(gb.sum(axis=(0, 1)))
            if needs_grad(x):
                dxp = np.zeros_like(xp)
                for j in range(k):
                    dxp[:, j : j + steps] += gb @ w.data[:, j, :]
                x._accumulate(unlift(dxp[:, left : left + steps]))

        out._backward = backward
    return out


def maxpool1d(x, window=2, stride=2):
    """Non-overlapping temporal max pooling; ties route to the earliest step."""
    x = as_tensor(x)
    if stride != window:
        raise ConfigError("maxpool1d supports only stride == window")
    xb, unlift = _batched(x.data)
    batch, steps, feats = xb.shape
    if steps % window:
        raise ShapeError(f"maxpool1d: sequence length {steps} not divisible by window {window}")
    blocks = xb.reshape(batch, steps // window, window, feats)
    arg = blocks.argmax(axis=2)
    pooled = np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :]
    out = Tensor(unlift(pooled), _parents=(x,), _op="maxpool1d")
    if needs_grad(x):

        def backward(g):
            gb, _ = _batched(g)
            dx = np.zeros_like(blocks)
            np.put_along_axis(dx, arg[:, :, None, :], gb[:, :, None, :], axis=2)
            x._accumulate(unlift(dx.reshape(batch, steps, feats)))

        out._backward = backward
    return out


def lstm_layer(x, params: LstmParams, direction="forward"):
    """Full hidden-state sequence of an LSTM started from zero states.

    ``direction="backward"`` runs right to left and returns the states
    re-aligned to input time order.
    """
    if direction not in ("forward", "backward"):
        raise ConfigError(f"unknown LSTM direction {direction!r}")
    x = as_tensor(x)
    kern, rec, bias = params.kernel, params.recurrent, params.bias
    xb, unlift = _batched(x.data)
    u = rec.shape[0]
    if kern.shape != (xb.shape[-1], 4 * u):
        raise ShapeError(f"lstm_layer: kernel shape {kern.shape} does not fit input dim {xb.shape[-1]} and {u} units")
    if rec.shape != (u, 4 * u) or bias.shape != (4 * u,):
        raise ShapeError("lstm_layer: recurrent/bias shapes inconsistent with unit count")
    reverse = direction == "backward"
    xs = xb[:, ::-1] if reverse else xb
    xproj = xs @ kern.data + bias.data
    hs, cs, acts = kernels.lstm_forward(np.ascontiguousarray(xproj), rec.data)
    out_data = hs[:, ::-1] if reverse else hs
    out = Tensor(unlift(np.ascontiguousarray(out_data)), _parents=(x, kern, rec, bias), _op=f"lstm_{direction}")
    if needs_grad(x, kern, rec, bias):

        def backward(g):
            gb, _ = _batched(g)
            if reverse:
                gb = gb[:, ::-1]
            dxproj, drec = kernels.lstm_backward(np.ascontiguousarray(gb), hs, cs, acts, rec.data)
            if needs_grad(kern):
                kern._accumulate(np.einsum("bti,btg->ig", xs, dxproj))
            if needs_grad(rec):
                rec._accumulate(drec)
            if needs_grad(bias):
                bias._accumulate(dxproj.sum(axis=(0, 1)))
            if needs_grad(x):
                dxs = dxproj @ kern.data.T
                x._accumulate(unlift(dxs[:, ::-1] if reverse else dxs))

        out._backward = backward
    return out


def bilstm(x, fwd: LstmParams, bwd: LstmParams):
    """Per-step concatenation ``[forward state ; backward state]``."""
    if fwd.units != bwd.units:
        raise ShapeError(f"bilstm: forward has {fwd.units} units, backward has {bwd.units}")
    return concat([lstm_layer(x, fwd, "forward"), lstm_layer(x, bwd, "backward")], axis=-1)


def dropout(x, rate, train, rng=None):
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` in training, eval is identity."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train or rate == 0:
        return x
    if rng is None:
        raise ConfigError("training-mode dropout needs a seeded generator")
    keep = rng.random(x.shape) >= rate
    scale = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    factor = keep * scale
    out = Tensor(x.data * factor, _parents=(x,), _op="dropout")
    if needs_grad(x):
        out._backward = lambda g: x._accumulate(g * factor)
    return out


def _dense_backward(x, w, g):
    """Gradients ``(dx, dw, db)`` of ``x @ w + b`` for batched 2-D ``x``."""
    return g @ w.T, x.T @ g, g.sum(axis=0)


def dense(x, weights, bias):
    x = as_tensor(x)
    w, b = weights, bias
    single = x.data.ndim == 1
    xb = x.data[None] if single else x.data
    if xb.ndim != 2 or w.data.ndim != 2 or xb.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"dense: input {x.shape}, weights {w.shape}, bias {b.shape} do not agree")
    y = xb @ w.data + b.data
    out = Tensor(y[0] if single else y, _parents=(x, w, b), _op="dense")
    if needs_grad(x, w, b):

        def backward(g):
            gb = g[None] if single else g
            dx, dw, db = _dense_backward(xb, w.data, gb)
            if needs_grad(w):
                w._accumulate(dw)
            if needs_grad(b):
                b._accumulate(db)
            if needs_grad(x):
                x._accumulate(dx[0] if single else dx)

        out._backward = backward
    return out


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits):
    """Softmax along the last axis, max-shifted for stability."""
    z = as_tensor(logits)
    if not np.all(np.isfinite(z.data)):
        raise DataError("softmax: non-finite logits")
    s = _softmax(z.data)
    out = Tensor(s, _parents=(z,), _op="softmax")
    if needs_grad(z):
        out._backward = lambda g: z._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))
    return out


def sparse_ce_loss(logits, labels, sample_ids=None):
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``.

    Softmax and log are fused so the gradient is ``(p - onehot) / B``.
    """
    z = as_tensor(logits)
    single = z.data.ndim == 1
    zb = z.data[None] if single else z.data
    y = np.atleast_1d(np.asarray(labels))
    n, classes = zb.shape
    if y.shape != (n,):
        raise ShapeError(f"sparse_ce_loss: {y.shape[0]} labels for {n} logit rows")
    if not np.issubdtype(y.dtype, np.integer):
        raise DataError("sparse_ce_loss: labels must be integer class indices")
    bad = np.flatnonzero((y < 0) | (y >= classes))
    if bad.size:
        pos = int(bad[0])
        who = f"sample {sample_ids[pos]}" if sample_ids is not None else f"batch row {pos}"
        raise DataError(f"label {int(y[pos])} of {who} outside [0, {classes})")
    shifted = zb - zb.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(n), y]
    loss = np.mean(lse - picked)
    out = Tensor(np.asarray(loss, dtype=zb.dtype), _parents=(z,), _op="sparse_ce")
    if needs_grad(z):

        def backward(g):
            p = np.exp(shifted - lse[:, None])
            p[np.arange(n), y] -= 1.0
            d = p * (g / n)
            z._accumulate(d[0] if single else d)

        out._backward = backward
    return out
