"""Element-wise vector kernel shared by every optimizer.

A ParamVector is either a plain Python float (scalar problems) or a 1-D
float64 numpy array. The scalar case is kept as a genuine float on purpose:
the toy experiments run tens of millions of optimizer steps, and a float
fast path is ~10x cheaper than single-element ufunc dispatch. Every
operation below handles both representations through one code path per
semantic, so optimizers never fork on the representation themselves.
"""
from __future__ import annotations

import math
from typing import Union

import numpy as np

ParamVector = Union[float, np.ndarray]

__all__ = [
    "ParamVector",
    "as_param_vector",
    "dim_of",
    "hadamard",
    "max_scalar",
    "clip_elementwise",
    "power_norm",
    "vsqrt",
    "vabs",
    "all_finite",
]


def as_param_vector(value) -> ParamVector:
    """Coerce numbers/sequences into the canonical representation."""
    if isinstance(value, (int, float)):
        return float(value)
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    return arr


def dim_of(v: ParamVector) -> int:
    return 1 if type(v) is float else int(np.asarray(v).size)


def hadamard(a: ParamVector, b: ParamVector) -> ParamVector:
    """Element-wise product. Dimensions must match exactly."""
    if type(a) is float and type(b) is float:
        return a * b
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if a_arr.shape != b_arr.shape:
        raise ValueError(
            f"hadamard dimension mismatch: {a_arr.shape} vs {b_arr.shape}"
        )
    return a_arr * b_arr


def max_scalar(v: ParamVector, s: float) -> ParamVector:
    """Element-wise max(v_i, s); the denominator floor max(sqrt(v), eps)."""
    if type(v) is float:
        return v if v >= s else s
    return np.maximum(v, s)


def clip_elementwise(v: ParamVector, c: float) -> ParamVector:
    """Element-wise clamp into [-c, c]; c = +inf is the identity."""
    if c < 0:
        raise ValueError(f"clip bound must be nonnegative, got {c}")
    if type(v) is float:
        if v > c:
            return c
        if v < -c:
            return -c
        return v
    if math.isinf(c):
        return v
    return np.clip(v, -c, c)


def power_norm(v: ParamVector, p: float) -> float:
    """(sum_i |v_i|^p)^(1/p); p = inf gives max_i |v_i|."""
    if p <= 0:
        raise ValueError(f"norm order must be positive, got {p}")
    if type(v) is float:
        return abs(v)
    arr = np.asarray(v, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(np.abs(arr)))
    if p == 2.0:
        return float(np.sqrt(np.sum(arr * arr)))
    if p == 1.0:
        return float(np.sum(np.abs(arr)))
    return float(np.sum(np.abs(arr) ** p) ** (1.0 / p))


def vsqrt(v: ParamVector) -> ParamVector:
    if type(v) is float:
        return math.sqrt(v)
    return np.sqrt(v)


def vabs(v: ParamVector) -> ParamVector:
    if type(v) is float:
        return abs(v)
    return np.abs(v)


def all_finite(v: ParamVector) -> bool:
    if type(v) is float:
        return math.isfinite(v)
    return bool(np.all(np.isfinite(v)))
