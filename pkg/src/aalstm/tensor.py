"""Dense vector/matrix kernels shared by every other module.

Vectors are 1-D float64 numpy arrays, matrices are 2-D row-major (C-order)
float64 arrays. All functions here are pure: they validate shapes, never
mutate their inputs, and return freshly allocated arrays, so values can be
shared read-only across threads.
"""

from __future__ import annotations

import numpy as np

# Nearest doubles inside the open intervals (0, 1) and (-1, 1). Saturating
# activations are clamped to these so gate/probability range invariants hold
# for arbitrarily large finite inputs.
_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)
_TANH_HI = np.nextafter(1.0, 0.0)


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_vector(data) -> np.ndarray:
    """Coerce to a 1-D float64 vector."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D row-major float64 matrix."""
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product; result[i] = sum_j m[i, j] * v[j]."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: matrix {m.shape} incompatible with vector {v.shape}")
    return m @ v


def concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate two vectors, a's entries first."""
    return np.concatenate([a, b])


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two equal-length vectors."""
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return a * b


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large |x| and clamped into open (0, 1).

    The two-branch form never exponentiates a positive argument, so there is
    no overflow; deep saturation that would round to exactly 0.0 or 1.0 is
    clamped to the nearest representable interior double instead.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def tanh_v(v: np.ndarray) -> np.ndarray:
    """Hyperbolic tangent clamped into open (-1, 1)."""
    return np.clip(np.tanh(v), -_TANH_HI, _TANH_HI)


def make_rng(seed) -> np.random.Generator:
    """Seeded generator on the counter-based Philox algorithm.

    Philox streams are reproducible across platforms for a fixed seed; `seed`
    may be an int or a sequence of ints (stream key).
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def uniform_init(rows: int, cols: int, lo: float, hi: float, seed) -> np.ndarray:
    """Matrix with i.i.d. entries from U(lo, hi), deterministic per seed."""
    if not lo < hi:
        raise ValueError(f"uniform_init: need lo < hi, got lo={lo!r}, hi={hi!r}")
    return make_rng(seed).uniform(lo, hi, size=(rows, cols))
