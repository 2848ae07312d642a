"""Dense tensors and the gradient tape.

Reverse-mode automatic differentiation over plain numpy arrays. A Tape
records every primitive op in execution order; backward() walks the records
in exact reverse order and accumulates (never overwrites) local gradients.
Production code runs float32; ops preserve float64 inputs so gradient
formulas can be verified at full precision.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "Tape", "as_tensor"]


class Tensor:
    """A dense array with an optional gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


class Tape:
    """Records primitive ops so gradients can be propagated in reverse.

    Each record is (output, inputs, backward) where backward maps the
    output gradient to one gradient array per recorded input. Inputs that
    are plain numpy arrays are constants and receive no gradient.
    """

    def __init__(self):
        self._records = []

    def __len__(self):
        return len(self._records)

    def record(self, out: Tensor, inputs, backward):
        self._records.append((out, tuple(inputs), backward))

    def backward(self, loss: Tensor):
        """Seed d(loss)/d(loss) = 1 and accumulate gradients tape-backwards."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if loss.grad is None:
            loss.grad = np.ones_like(loss.data)
        for out, inputs, backward_fn in reversed(self._records):
            if out.grad is None:
                continue  # not on any path to the loss
            grads = backward_fn(out.grad)
            for tensor, grad in zip(inputs, grads):
                if not isinstance(tensor, Tensor) or grad is None:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += grad

    def clear(self):
        self._records.clear()
