from .core import (
    ComputationRecord,
    Tensor,
    activation,
    add,
    batch_norm,
    concat,
    conv3x3,
    cross_entropy_from_logits,
    dropout,
    embedding,
    gelu,
    getitem,
    grad_enabled,
    im2col3x3,
    layer_norm,
    leaky_relu,
    log_softmax,
    matmul,
    mul,
    no_grad,
    pow_scalar,
    reshape,
    sigmoid,
    tabs,
    softmax,
    softplus,
    stack,
    swapaxes,
    tclip,
    texp,
    tlog,
    tmean,
    tsqrt,
    tsum,
    ttanh,
    transpose,
)
from .module import Embedding, LayerNorm, Linear, Module, Parameter
from .optim import AdamW, OptimState, adamw_step_single, clip_global_norm
from .checkpoint import CheckpointError, load_arrays, restore_into, save_arrays

__all__ = [
    "ComputationRecord", "Tensor", "activation", "add", "batch_norm", "concat", "conv3x3",
    "cross_entropy_from_logits", "dropout", "embedding", "gelu", "getitem", "grad_enabled",
    "im2col3x3", "layer_norm", "leaky_relu", "log_softmax", "matmul", "mul", "no_grad",
    "pow_scalar", "reshape", "sigmoid", "softmax", "softplus", "stack", "swapaxes", "tabs", "tclip", "texp",
    "tlog", "tmean", "tsqrt", "tsum", "ttanh", "transpose",
    "Embedding", "LayerNorm", "Linear", "Module", "Parameter",
    "AdamW", "OptimState", "adamw_step_single", "clip_global_norm",
    "CheckpointError", "load_arrays", "restore_into", "save_arrays",
]
