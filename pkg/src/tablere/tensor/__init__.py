"""Numeric kernel: tensors, differentiable layer ops, optimizers, gradient checks."""
from .autograd import Tensor, as_tensor
from .gradcheck import check_gradients, numeric_grad, relative_error
from .ops import (
    ConvParams,
    LstmParams,
    bilstm,
    concat,
    conv1d_same,
    dense,
    dropout,
    flatten,
    lstm_layer,
    maxpool1d,
    mul,
    relu,
    reshape,
    softmax,
    sparse_ce_loss,
    tsum,
)
from .optim import OptimizerState, init_optimizer, optimizer_step

__all__ = [
    "Tensor",
    "as_tensor",
    "ConvParams",
    "LstmParams",
    "OptimizerState",
    "bilstm",
    "check_gradients",
    "concat",
    "conv1d_same",
    "dense",
    "dropout",
    "flatten",
    "init_optimizer",
    "lstm_layer",
    "maxpool1d",
    "mul",
    "numeric_grad",
    "optimizer_step",
    "relative_error",
    "relu",
    "reshape",
    "softmax",
    "sparse_ce_loss",
    "tsum",
]
