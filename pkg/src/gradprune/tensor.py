"""Dense float32 kernels and the seeded random generator.

Matrices are C-contiguous 2-D float32 numpy arrays in row-major order;
vectors are 1-D float32 arrays.  All operations are pure: they never
modify their inputs and return freshly allocated arrays.

Randomness comes from numpy's Philox bit generator (a counter-based,
splittable PRNG with published round constants), so a given seed
reproduces the same stream bit-for-bit on every platform.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

# Activations are clipped at this value: min(max(x, 0), 20).
RELU_CLIP = 20.0


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(seed))


def matrix(data, rows=None, cols=None) -> np.ndarray:
    """Validate/coerce `data` into a float32 row-major matrix."""
    m = np.ascontiguousarray(data, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape != (rows, cols):
        raise ShapeError(f"expected shape {(rows, cols)}, got {m.shape}")
    if not np.isfinite(m).all():
        raise ShapeError("matrix contains non-finite values")
    return m


def vector(data, length=None) -> np.ndarray:
    """Validate/coerce `data` into a float32 vector."""
    v = np.ascontiguousarray(data, dtype=np.float32)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {v.shape[0]}")
    if not np.isfinite(v).all():
        raise ShapeError("vector contains non-finite values")
    return v


def gemv(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Dense matrix-vector product, out[i] = sum_j m[i, j] * x[j]."""
    if m.ndim != 2 or x.ndim != 1:
        raise ShapeError(f"gemv expects (matrix, vector), got ndim {m.ndim} and {x.ndim}")
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"gemv dimension mismatch: {m.shape} x ({x.shape[0]},)")
    return m @ x


def clipped_relu(x: np.ndarray) -> np.ndarray:
    """min(max(x, 0), RELU_CLIP), elementwise."""
    return np.minimum(np.maximum(x, 0.0), RELU_CLIP)


def clipped_relu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of clipped_relu: 1 on (0, RELU_CLIP), 0 elsewhere."""
    return ((x > 0.0) & (x < RELU_CLIP)).astype(x.dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def rand_uniform(rng: np.random.Generator, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    """Float32 matrix with entries drawn uniformly from [lo, hi)."""
    if not lo < hi:
        raise ParameterError(f"rand_uniform requires lo < hi, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, size=(rows, cols)).astype(np.float32)
