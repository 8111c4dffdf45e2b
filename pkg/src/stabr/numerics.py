"""Dense float64 primitives and a portable seeded generator.

Matrices are plain ``numpy.ndarray`` objects of dtype float64, stored
row-major.  The helpers here add the shape checks and numerically stable
formulations the rest of the package relies on.

The generator ``Rng`` is SplitMix64.  Its state is a single unsigned 64-bit
integer ``s`` and the n-th draw (n = 1, 2, ...) is::

    z = s0 + n * 0x9E3779B97F4A7C15          (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9  (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB  (mod 2**64)
    out = z ^ (z >> 31)

Uniform reals in [0, 1) are ``(out >> 11) * 2**-53``.  Because each draw is a
pure function of the seed and its counter the stream can be produced in
vectorised blocks and reproduced bit-exactly in any language.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

DTYPE = np.float64

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 generator with explicit, copyable state.

    A single ``Rng`` must not be shared between threads; use :meth:`spawn`
    to derive independent child generators.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        """Return the next ``n`` raw 64-bit outputs and advance the state."""
        if n < 0:
            raise ValueError(f"draw count must be nonnegative, got {n}")
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = np.uint64(self.seed) + idx * _GAMMA
        return _mix(z)

    def random(self, shape=()) -> np.ndarray:
        """Uniform draws in [0, 1) with the given shape."""
        if isinstance(shape, int):
            shape = (shape,)
        shape = tuple(int(s) for s in shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.next_u64(n) >> np.uint64(11)).astype(DTYPE) * 2.0**-53
        return u.reshape(shape) if shape else u[0]

    def permutation(self, n: int) -> np.ndarray:
        """A uniformly random permutation of ``range(n)``."""
        return np.argsort(self.random((n,)), kind="stable")

    def spawn(self, n: int) -> list["Rng"]:
        """Derive ``n`` child generators seeded from this stream."""
        return [Rng(int(s)) for s in self.next_u64(n)]

    def state(self) -> tuple[int, int]:
        return self.seed, self.counter

    def copy(self) -> "Rng":
        other = Rng(self.seed)
        other.counter = self.counter
        return other


def rng_uniform(rng: Rng, lo: float, hi: float, shape) -> np.ndarray:
    """Matrix of uniform draws in ``[lo, hi)``."""
    if not lo < hi:
        raise ValueError(f"rng_uniform needs lo < hi, got lo={lo}, hi={hi}")
    u = np.asarray(rng.random(shape), dtype=DTYPE)
    out = lo + (hi - lo) * u
    # rounding can land exactly on hi
    return np.minimum(out, np.nextafter(hi, lo))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with a shape check that names both operands."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return a


def softmax(v, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax along ``axis``."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    """``log(softmax(v))`` without forming the probabilities."""
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ValueError("log_softmax of an empty vector")
    shifted = v - np.max(v, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def relu(v) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=DTYPE), 0.0)


def sigmoid(v) -> np.ndarray:
    """Logistic function, evaluated without overflow for large ``|v|``."""
    v = np.asarray(v, dtype=DTYPE)
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(v) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=DTYPE))


def glorot_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (rows + cols))
    return rng_uniform(rng, -limit, limit, (rows, cols))
