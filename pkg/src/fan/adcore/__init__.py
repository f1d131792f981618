"""Minimal dense-tensor engine: reverse-mode autodiff plus ADADELTA."""

from . import kernels
from .gradcheck import check_gradients, numeric_grad, relative_error
from .ops import (
    add,
    affine,
    concat,
    conv2d,
    cross_entropy,
    exp,
    index,
    log,
    log_softmax,
    lstm_cell,
    matmul,
    matmul_vec,
    maxpool2d,
    mean,
    mul,
    out_extent,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    tanh,
    transpose,
)
from .ops import sum as tsum
from .optim import AdadeltaState, adadelta_step
from .tensor import (
    Graph,
    ShapeError,
    Tensor,
    as_tensor,
    backward,
    current_graph,
    fresh_graph,
    no_grad,
    zero_grads,
)
