"""Seeded parameter initialisers."""

from __future__ import annotations

import math

import numpy as np

from .rng import RngState
from .tensor import ParamStore, Tensor


class Initializer:
    def __init__(self, store: ParamStore, rng: RngState):
        self.store = store
        self.rng = rng

    def glorot(self, name: str, shape: tuple[int, ...], fan_in: int | None = None,
               fan_out: int | None = None) -> Tensor:
        fan_in = fan_in if fan_in is not None else shape[-1]
        fan_out = fan_out if fan_out is not None else shape[0]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return self.store.add(name, self.rng.uniform(-bound, bound, shape))

    def normal(self, name: str, shape: tuple[int, ...], scale: float) -> Tensor:
        return self.store.add(name, self.rng.normal(0.0, scale, shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.store.add(name, np.zeros(shape))
