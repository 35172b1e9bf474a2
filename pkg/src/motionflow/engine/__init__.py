"""Tensor engine: reverse-mode autodiff over numpy arrays."""
from .checkpoint import load_checkpoint, save_checkpoint
from .fused import joint_attention, rope
from .gradcheck import grad_check
from .optim import AdamW
from .tensor import (
    Tensor,
    add,
    affine,
    clip,
    concat,
    default_dtype,
    embedding_lookup,
    exp,
    layer_norm,
    logsigmoid,
    matmul,
    mean,
    minimum,
    mse,
    mul,
    narrow,
    neg,
    no_grad,
    param,
    precision,
    reshape,
    set_default_dtype,
    silu,
    softmax,
    sub,
    sum_,
    tensor,
    transpose,
)

__all__ = [
    "AdamW", "Tensor", "add", "affine", "clip", "concat", "default_dtype",
    "embedding_lookup", "exp", "grad_check", "joint_attention", "layer_norm",
    "load_checkpoint", "logsigmoid", "matmul", "mean", "minimum", "mse",
    "mul", "narrow", "neg", "no_grad", "param", "precision", "reshape",
    "rope", "save_checkpoint", "set_default_dtype", "silu", "softmax", "sub",
    "sum_", "tensor", "transpose",
]
