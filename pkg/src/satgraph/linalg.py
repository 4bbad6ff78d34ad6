"""Dense double-precision primitives and seeded random draws.

Everything downstream (layers, training) is built on plain float64
numpy arrays; the helpers here add the shape/validity checks that the
rest of the package relies on, so failures surface with usable
messages instead of numpy broadcasting surprises.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    """Elementwise max(x, slope*x) for slope in [0, 1]."""
    if not 0.0 <= slope <= 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1], got {slope}")
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(x, slope: float = 0.2) -> np.ndarray:
    """Derivative of leaky_relu; the kink at 0 takes the negative-side slope."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, 1.0, slope)


def activate(x, kind: str, slope: float = 0.2) -> np.ndarray:
    if kind == "relu":
        return np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown activation {kind!r}")


def activate_grad(x, kind: str, slope: float = 0.2) -> np.ndarray:
    """Derivative of `activate` evaluated at pre-activation x."""
    if kind == "relu":
        return (np.asarray(x, dtype=np.float64) > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return leaky_relu_grad(x, slope)
    raise ValueError(f"unknown activation {kind!r}")


def softmax_row(x) -> np.ndarray:
    """Numerically stable softmax of a single vector.

    Subtracts the max before exponentiating, so the output sums to one
    even for inputs with magnitude in the thousands.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("softmax_row: empty input")
    e = np.exp(x - x.max())
    return e / e.sum()


def glorot_uniform(rows: int, cols: int, rng: "Rng") -> np.ndarray:
    """Uniform draw from +-sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError(f"glorot_uniform needs positive dims, got {rows}x{cols}")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, (rows, cols))


class Rng:
    """Deterministic random stream backed by numpy's Philox generator.

    Philox is a counter-based generator keyed here by (seed, stream),
    which makes the draw sequence a pure function of those two integers
    on every platform. `split` derives an independent stream from the
    same seed, so e.g. parameter init and epoch shuffling never share
    state.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        key = np.array([self.seed, self.stream], dtype=_U64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, stream: int) -> "Rng":
        """Independent generator keyed by the same seed and a new stream id."""
        return Rng(self.seed, stream)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        """Draws from [low, high) like numpy's Generator.integers."""
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"
