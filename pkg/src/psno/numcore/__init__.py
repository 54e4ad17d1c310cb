"""Float64 tensors with reverse-mode gradients, FFTs, ODE solvers and Adam."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .fft import fft, ifft, irfft, rfft
from .params import (AdamState, ParamSet, ParamSpec, adam_step, glorot_bound,
                     init_params, value_and_grad)
from .spectral import spectral_conv
from .tensor import (ACTIVATIONS, Tensor, as_tensor, concat, gelu, grad, matmul,
                     no_grad, sqrt, square, stack, take, tanh)

__all__ = [
    "ACTIVATIONS", "AdamState", "CheckpointError", "ParamSet", "ParamSpec", "Tensor",
    "adam_step", "as_tensor", "concat", "fft", "gelu", "glorot_bound", "grad", "ifft",
    "init_params", "irfft", "load_checkpoint", "matmul", "no_grad", "rfft",
    "save_checkpoint", "spectral_conv", "sqrt", "square", "stack", "take", "tanh",
    "value_and_grad",
]
