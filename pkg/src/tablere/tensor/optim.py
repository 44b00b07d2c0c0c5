"""Adam and RMSProp updates over lists of numpy parameter arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError

KINDS = ("adam", "rmsprop")


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.9
    eps: float = 1e-7
    step: int = 0
    first: list = field(default_factory=list)  # Adam first moment; unused by RMSProp
    second: list = field(default_factory=list)  # squared-gradient accumulator


def init_optimizer(kind, params, lr, **constants):
    if kind not in KINDS:
        raise ConfigError(f"unknown optimizer {kind!r}; expected one of {KINDS}")
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    state = OptimizerState(kind=kind, lr=float(lr), **constants)
    state.second = [np.zeros_like(p) for p in params]
    if kind == "adam":
        state.first = [np.zeros_like(p) for p in params]
    return state


def optimizer_step(params, grads, state):
    """Update ``params`` in place and return ``(params, state)``.

    A ``None`` gradient is treated as zero for that parameter.
    """
    if len(params) != len(grads) or len(params) != len(state.second):
        raise ShapeError("optimizer_step: params, grads and state disagree in length")
    state.step += 1
    if state.kind == "adam":
        bc1 = 1.0 - state.beta1**state.step
        bc2 = 1.0 - state.beta2**state.step
    for idx, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"optimizer_step: grad shape {g.shape} != param shape {p.shape} (param {idx})")
        v = state.second[idx]
        if state.kind == "adam":
            m = state.first[idx]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        else:
            v *= state.rho
            v += (1.0 - state.rho) * g * g
            p -= state.lr * g / (np.sqrt(v) + state.eps)
    return params, state
