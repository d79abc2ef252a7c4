"""Click predictors: dot product or a feed-forward network over [u; r_c]."""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .init import Initializer
from .tensor import Tensor

KINDS = ("dot", "neural")


def dot_score(u: Tensor, r_c: Tensor) -> Tensor:
    if u.shape[-1] != r_c.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {r_c.shape}")
    return T.tsum(u * r_c, axis=-1)


@dataclass
class MLPParams:
    weights: list[Tensor]
    biases: list[Tensor]

    @classmethod
    def create(cls, init: Initializer, prefix: str, d_in: int, hidden: list[int]):
        widths = [d_in, *hidden, 1]
        weights, biases = [], []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            weights.append(init.glorot(f"{prefix}.layer{i}.weight", (b, a)))
            biases.append(init.zeros(f"{prefix}.layer{i}.bias", (b,)))
        return cls(weights, biases)

    @classmethod
    def bind(cls, store, prefix: str, depth: int):
        return cls([store[f"{prefix}.layer{i}.weight"] for i in range(depth)],
                   [store[f"{prefix}.layer{i}.bias"] for i in range(depth)])


def dnn_score(u: Tensor, r_c: Tensor, params: MLPParams) -> Tensor:
    """ReLU hidden layers, raw scalar output per pair."""
    if u.shape[-1] != r_c.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {r_c.shape}")
    x = T.concat([u, r_c], axis=-1)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = T.linear(x, w, b)
        if i < last:
            x = T.relu(x)
    return T.reshape(x, x.shape[:-1])
