"""Deterministic tensor arithmetic, seeded randomness, gradient checking."""

from .gradcheck import GradCheckReport, grad_check
from .initializers import seeded_init
from .optim import Adam
from .rng import Rng
from .tensor import (
    MASK_NEG,
    Tensor,
    add,
    clip,
    concat,
    constant,
    csum,
    div,
    exp,
    gather,
    gather2d,
    get_precision,
    group_sum_rows,
    l2_normalize_rows,
    log,
    logsumexp,
    matmul,
    maximum,
    mul,
    neg,
    ones,
    pad_axis,
    power,
    reduce_max,
    relu,
    reshape,
    rowmap,
    set_precision,
    sigmoid,
    slice_axis,
    softplus,
    sub,
    tensor,
    tmean,
    transpose,
    tsum,
    zero_grads,
    zeros,
)

__all__ = [
    "Adam",
    "GradCheckReport",
    "MASK_NEG",
    "Rng",
    "Tensor",
    "add",
    "clip",
    "concat",
    "constant",
    "csum",
    "div",
    "exp",
    "gather",
    "gather2d",
    "get_precision",
    "grad_check",
    "group_sum_rows",
    "l2_normalize_rows",
    "log",
    "logsumexp",
    "matmul",
    "maximum",
    "mul",
    "neg",
    "ones",
    "pad_axis",
    "power",
    "reduce_max",
    "relu",
    "reshape",
    "rowmap",
    "seeded_init",
    "set_precision",
    "sigmoid",
    "slice_axis",
    "softplus",
    "sub",
    "tensor",
    "tmean",
    "transpose",
    "tsum",
    "zero_grads",
    "zeros",
]
