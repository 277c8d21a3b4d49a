from dragonet.numerics.adam import AdamState, adam_step
from dragonet.numerics.autodiff import Tape, Var
from dragonet.numerics.gradcheck import grad_check
from dragonet.numerics.ops import cross_entropy, elementwise, layer_norm, matmul, relu, sigmoid, softmax_rows

__all__ = [
    "AdamState",
    "Tape",
    "Var",
    "adam_step",
    "cross_entropy",
    "elementwise",
    "grad_check",
    "layer_norm",
    "matmul",
    "relu",
    "sigmoid",
    "softmax_rows",
]
