"""Dense numeric substrate: precision mode, seeded RNG, activations, init.

Tensors are plain numpy arrays. Precision is a process-wide run mode:
float32 for training and inference, float64 for gradient checking.
"""

from __future__ import annotations

import contextlib
import math
import os
from typing import Iterator, Sequence

import numpy as np

from .errors import NumericError, ShapeError, UsageError

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype: type = np.float32
DEBUG = os.environ.get("STEGODETECT_DEBUG", "") not in ("", "0")


def set_precision(name: str) -> None:
    global _dtype
    if name not in _PRECISIONS:
        raise UsageError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}")
    _dtype = _PRECISIONS[name]


def get_dtype() -> type:
    return _dtype


def precision_name() -> str:
    return np.dtype(_dtype).name


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the run precision (used by gradient checks)."""
    previous = precision_name()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


def set_debug(flag: bool) -> None:
    global DEBUG
    DEBUG = bool(flag)


def check_finite(op: str, *arrays: np.ndarray) -> None:
    """Abort with the operation named if any array holds NaN/Inf."""
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite value produced by {op}")


def _debug_check(op: str, *arrays: np.ndarray) -> None:
    if DEBUG:
        check_finite(op, *arrays)


class Rng:
    """Seeded, portable random stream (PCG64 behind numpy's Generator).

    Substreams are derived from (seed, key...) via SeedSequence spawn keys,
    so parallel consumers can each own an independent, reproducible stream.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if seed < 0:
            raise UsageError("seed must be non-negative")
        self.seed = int(seed)
        self.key = tuple(_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(k) for k in key))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def bits(self, n: int) -> np.ndarray:
        return self.gen.integers(0, 2, size=n, dtype=np.uint8)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a @ b
    _debug_check("matmul", out)
    return out


def sigmoid(x):
    # tanh form never overflows for finite input
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x):
    return np.tanh(x)


def tanh_grad(x):
    t = np.tanh(x)
    return 1.0 - t * t


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction; accepts a vector or a 2-D batch."""
    z = np.asarray(logits)
    if z.size == 0 or z.shape[-1] == 0:
        raise UsageError("softmax of an empty vector")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)
    _debug_check("softmax", out)
    return out


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_weights(shape: Sequence[int], rng: Rng, scheme: str = "glorot") -> np.ndarray:
    """Initialise a tensor.

    ``glorot``: uniform in +-sqrt(6/(fan_in+fan_out)); for 2-D shapes
    fan_in is the row count. ``zeros`` for biases, ``forget`` for the LSTM
    forget-gate bias (all ones).
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise UsageError(f"init_weights needs positive dimensions, got {shape}")
    if scheme == "glorot":
        fan_in = shape[0]
        fan_out = shape[1] if len(shape) > 1 else shape[0]
        bound = glorot_bound(fan_in, fan_out)
        return rng.uniform(-bound, bound, size=shape).astype(_dtype)
    if scheme == "zeros":
        return np.zeros(shape, dtype=_dtype)
    if scheme == "forget":
        return np.ones(shape, dtype=_dtype)
    raise UsageError(f"unknown init scheme {scheme!r}")
