from . import tensor as ops
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .nets import Discriminator, Generator, ParamSet, flatten_grads, frozen
from .optim import AdamState, adam_step
from .tensor import Tensor, tensor

__all__ = [
    "AdamState", "Discriminator", "Generator", "ParamSet", "Tensor", "adam_step",
    "flatten_grads", "frozen", "load_checkpoint", "ops", "save_checkpoint", "tensor",
]
