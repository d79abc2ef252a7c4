"""Seeded, counter-based random streams.

Every random draw in the package goes through :class:`RngState`, which wraps
numpy's Philox4x64 bit generator. Philox is counter-based, so a given
``(seed, stream)`` pair yields the same numbers on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10"


def _stream_key(seed: int, stream: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


class RngState:
    """A named, reproducible random stream.

    ``RngState(seed, "dropout")`` and ``RngState(seed, "init")`` are
    independent streams; both are fully determined by their arguments.
    """

    algorithm = ALGORITHM

    def __init__(self, seed: int, stream: str = "main"):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream = stream
        self._bitgen = np.random.Philox(key=_stream_key(self.seed, stream))
        self.generator = np.random.Generator(self._bitgen)

    def child(self, stream: str) -> "RngState":
        return RngState(self.seed, f"{self.stream}/{stream}")

    # thin wrappers so callers never reach for the global numpy RNG
    def normal(self, loc: float, scale: float, size) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def random(self, size) -> np.ndarray:
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def get_state(self) -> dict:
        return {"seed": self.seed, "stream": self.stream, "algorithm": ALGORITHM,
                "bit_generator": _jsonable(self._bitgen.state)}

    @classmethod
    def from_state(cls, state: dict) -> "RngState":
        if state.get("algorithm") != ALGORITHM:
            raise ValueError(f"unsupported RNG algorithm {state.get('algorithm')!r}")
        rng = cls(state["seed"], state["stream"])
        rng._bitgen.state = _from_jsonable(state["bit_generator"])
        return rng


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": [int(x) for x in obj.tolist()], "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj
