from .tensor import Tape, Tensor, as_tensor
from .optim import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from . import ops

__all__ = [
    "Tape", "Tensor", "as_tensor", "AdamState", "adam_step",
    "load_checkpoint", "save_checkpoint", "ops",
]
