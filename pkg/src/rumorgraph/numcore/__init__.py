"""Deterministic tensor math: tape autodiff, RNG substreams, AdamW, gradcheck."""

from .gradcheck import finite_diff_grad, relative_error
from .optim import AdamWState, TrainingStepError, adamw_step
from .rng import RngStreams, child_seed, fnv1a64
from .tensor import (
    ShapeError,
    Tensor,
    active_dtype,
    add,
    as_tensor,
    clamp_min,
    clear_grads,
    concat_cols,
    concat_rows,
    div,
    exp,
    gather_rows,
    glorot_init,
    grad_wrt,
    layer_norm,
    log,
    matmul,
    mean_rows,
    mul,
    no_grad,
    parameter,
    relu,
    row,
    segment_mean,
    set_precision,
    softmax_rows,
    sqrt,
    sum_all,
    sum_rows,
    tile_rows,
    transpose,
)

__all__ = [
    "AdamWState",
    "RngStreams",
    "ShapeError",
    "Tensor",
    "TrainingStepError",
    "active_dtype",
    "adamw_step",
    "add",
    "as_tensor",
    "child_seed",
    "clamp_min",
    "clear_grads",
    "concat_cols",
    "concat_rows",
    "div",
    "exp",
    "finite_diff_grad",
    "fnv1a64",
    "gather_rows",
    "glorot_init",
    "grad_wrt",
    "layer_norm",
    "log",
    "matmul",
    "mean_rows",
    "mul",
    "no_grad",
    "parameter",
    "relative_error",
    "relu",
    "row",
    "segment_mean",
    "set_precision",
    "softmax_rows",
    "sqrt",
    "sum_all",
    "sum_rows",
    "tile_rows",
    "transpose",
]
