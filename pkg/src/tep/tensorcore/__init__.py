from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    div,
    dropout,
    exp,
    forward_backward,
    getitem,
    log,
    matmul,
    mul,
    neg,
    pad_time,
    powc,
    relu,
    reshape,
    sigmoid,
    softmax,
    sqrt,
    sub,
    swapaxes,
    tanh,
    tape_scope,
    tmax,
    tmean,
    tsum,
    uniform_fan_init,
)
from .optim import OptimizerState, optimizer_step
from .gradcheck import LAYER_KINDS, GradCheckReport, grad_check

__all__ = [
    "Tape",
    "Tensor",
    "tape_scope",
    "forward_backward",
    "OptimizerState",
    "optimizer_step",
    "grad_check",
    "GradCheckReport",
    "LAYER_KINDS",
]
