"""Parameter containers: dataclasses whose Tensor fields are trainable leaves."""
from __future__ import annotations

import dataclasses
from typing import Iterator

import numpy as np

from .autodiff import Tensor


class ParamTree:
    """Mixin for dataclasses holding Tensors, nested trees, or lists of trees.

    Iteration order follows field declaration order, so names are stable
    across processes (the checkpoint format relies on this).
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            yield from _walk(value, f"{prefix}{f.name}")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None


def _walk(value, name: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, ParamTree):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def param(data, dtype) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return param(rng.uniform(-bound, bound, size=shape), dtype)


def zeros(shape, dtype) -> Tensor:
    return param(np.zeros(shape), dtype)


def ones(shape, dtype) -> Tensor:
    return param(np.ones(shape), dtype)
