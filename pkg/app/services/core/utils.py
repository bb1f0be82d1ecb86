# app/services/core/utils.py
import functools
import math
import time
import zlib
from typing import Any, Callable, TypeVar

import numpy as np

from .config import log

T = TypeVar("T")


def timeit(tag: str | None = None):
    """Decorator that logs wall-clock time of the wrapped call."""

    def deco(func: Callable[..., T]) -> Callable[..., T]:
        label = tag or func.__name__

        @functools.wraps(func)
        def wrap(*a: Any, **kw: Any) -> T:
            t0 = time.perf_counter()
            try:
                return func(*a, **kw)
            finally:
                log.info(f"⏱ {label}  {time.perf_counter() - t0:.3f} s")

        return wrap

    return deco


def derive_seed(master: int, *keys: int | str) -> int:
    """Derive an independent 32-bit seed from a master seed and a key path.

    String keys are hashed with CRC32 (stable across processes, unlike
    ``hash``), so ``derive_seed(7, "smote", 3)`` is the same on every run and
    every worker.
    """
    spawn_key = tuple(zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k) for k in keys)
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=spawn_key)
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def round_half_up(value: float) -> int:
    """Round to nearest with halves going up (``round`` rounds halves to even)."""
    return int(math.floor(value + 0.5))


def as_binary_vector(y: Any, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.int64)


def as_matrix(X: Any, name: str = "X") -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    return arr
