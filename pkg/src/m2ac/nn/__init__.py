from .autograd import NonFiniteError, Tensor, backward, grad
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Mlp
from .optim import Adam, AdamState, adaptive_step

__all__ = [
    "Adam",
    "AdamState",
    "Mlp",
    "NonFiniteError",
    "Tensor",
    "adaptive_step",
    "backward",
    "grad",
    "load_checkpoint",
    "save_checkpoint",
]
