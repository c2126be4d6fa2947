"""Minimal reverse-mode autodiff over dense numpy arrays."""
from .functional import (
    activation,
    conv1d_depthwise,
    cross_entropy,
    dropout,
    layernorm,
    linear,
    logsumexp,
    sigmoid,
    silu,
    softmax,
    softplus,
)
from .gradcheck import grad_check
from .linalg import expm_array, matrix_exp
from .spectral import ComplexPair, complex_mul, irfft, rfft
from .tensor import (
    ShapeError,
    Tensor,
    abs_sum,
    absolute,
    add,
    as_tensor,
    concat,
    div,
    exp,
    flip,
    is_grad_enabled,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    pad_time,
    power,
    reduce,
    reshape,
    stack,
    sub,
    swapaxes,
    tanh,
    trace,
    transpose,
    tsum,
    where,
)


def elementwise(tag: str, a, b):
    """Binary elementwise op by name: add, sub, mul, div or pow."""
    table = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}
    try:
        fn = table[tag]
    except KeyError:
        raise ValueError(f"unknown elementwise op {tag!r}") from None
    return fn(a, b)


__all__ = [name for name in dir() if not name.startswith("_")]
