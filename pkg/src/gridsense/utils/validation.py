"""Input-validation helpers shared across the package."""
from __future__ import annotations

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Coerce ``seed`` into a numpy Generator.

    Accepts an existing Generator (returned as-is), an int, or a sequence of
    ints used as a seed key. ``None`` gives fresh OS entropy.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def seed_key(*parts: int) -> list[int]:
    """Build a composite seed key for a derived random stream."""
    return [int(p) & 0xFFFFFFFF for p in parts]


def check_genome(genome, n_buses: int) -> np.ndarray:
    """Validate a sensor-placement genome and return it as a bool vector."""
    g = np.asarray(genome)
    if g.ndim != 1 or g.shape[0] != n_buses:
        raise ValueError(f"genome must be a length-{n_buses} vector, got shape {g.shape}")
    if g.dtype != bool:
        vals = np.unique(g)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("genome entries must be 0/1")
        g = g.astype(bool)
    return g


def check_adjacency(adjacency) -> np.ndarray:
    """Validate a symmetric boolean adjacency matrix with an empty diagonal."""
    a = np.asarray(adjacency)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {a.shape}")
    a = a.astype(bool)
    if a.diagonal().any():
        raise ValueError("adjacency must have an empty diagonal")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    return a


def check_channel_tensor(x, n_buses: int, n_channels: int = 6) -> np.ndarray:
    """Validate a stack of per-bus channel matrices, shape (n, N, C)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1] != n_buses or arr.shape[2] != n_channels:
        raise ValueError(
            f"expected channel tensor of shape (n, {n_buses}, {n_channels}), got {np.shape(x)}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("channel tensor contains non-finite values")
    return arr
