"""
Utility functions for the alpha-SDE engine.
Contains finite differences, counter-based RNG streams, block scheduling and peak refinement.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np

from .config import FD_FLOOR, FD_REL

T = TypeVar("T")


# ==============================================================================
# FINITE DIFFERENCES
# ==============================================================================

def fd_steps(x: np.ndarray) -> np.ndarray:
    """Per-component central-difference step max(1e-5, 1e-5 |x|)."""
    return np.maximum(FD_FLOOR, FD_REL * np.abs(x))


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """
    Central-difference derivative of a vectorized field.

    Args:
        f: maps states of shape (..., n) to arrays of shape (...,) + S
        x: states, shape (..., n)

    Returns:
        Array of shape (...,) + S + (n,), the last axis indexing d/dx_j.
    """
    x = np.asarray(x, dtype=float)
    h = fd_steps(x)
    columns = []
    for j in range(x.shape[-1]):
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h[..., j]
        xm[..., j] -= h[..., j]
        diff = np.asarray(f(xp)) - np.asarray(f(xm))
        span = xp[..., j] - xm[..., j]
        span = span.reshape(span.shape + (1,) * (diff.ndim - span.ndim))
        columns.append(diff / span)
    return np.stack(columns, axis=-1)


# ==============================================================================
# RANDOM STREAMS
# ==============================================================================

def stream(seed: int, *key: int) -> np.random.Generator:
    """
    Philox generator for the stream (seed, key...).

    Philox is counter-based and SeedSequence hashes the spawn key, so every
    (seed, key) pair gives the same numbers on every platform and in any order.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def path_streams(seed: int, purpose: int, start: int, count: int) -> List[np.random.Generator]:
    """Streams of paths start .. start + count - 1, each keyed by (seed, purpose, path index)."""
    return [stream(seed, purpose, i) for i in range(start, start + count)]


def blocks(total: int, size: int) -> List[Tuple[int, int, int]]:
    """Split `total` items into (block_index, start, count) chunks of at most `size`."""
    return [(b, start, min(size, total - start)) for b, start in enumerate(range(0, total, size))]


def map_ordered(fn: Callable[[T], object], items: Sequence[T], threads: int = 1) -> list:
    """Apply fn to items, optionally on a thread pool; results keep the input order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ==============================================================================
# PEAKS
# ==============================================================================

def refine_peak(values: np.ndarray, i: int) -> float:
    """Sub-cell offset (in cells) of the parabola through values[i-1:i+2]."""
    if i <= 0 or i >= len(values) - 1:
        return 0.0
    left, mid, right = values[i - 1], values[i], values[i + 1]
    curvature = left - 2.0 * mid + right
    if curvature == 0.0 or not np.isfinite(curvature):
        return 0.0
    return float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))


def local_maxima(values: np.ndarray) -> List[int]:
    """Interior indices that are strict-left / weak-right local maxima."""
    v = np.asarray(values)
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    return [int(i) + 1 for i in np.flatnonzero(inner)]
