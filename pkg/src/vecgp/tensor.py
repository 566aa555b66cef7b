"""Dense float32 tensors, coordinate domains and reduction metrics.

All values flowing through the engine are plain numpy ``float32`` arrays
sharing a single shape (no broadcasting).  Elementwise work is chunked over
the flat index range so results are bit-identical regardless of how many
worker threads are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

# Chunk length is fixed so reduction order (and therefore rounding) never
# depends on the thread count.
CHUNK = 1 << 16

_num_threads = 1
_pool: ThreadPoolExecutor | None = None


class DomainError(ValueError):
    """Invalid evaluation domain (bad resolution or range)."""


class ShapeError(ValueError):
    """Tensor arguments do not share one shape."""


def set_num_threads(n: int) -> None:
    """Cap the worker pool used for elementwise kernels (1 = serial)."""
    global _num_threads, _pool
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if n != _num_threads and _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _num_threads = n


def get_num_threads() -> int:
    return _num_threads


def _get_pool() -> ThreadPoolExecutor:
    global _pool
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_num_threads)
    return _pool


@dataclass(frozen=True)
class DomainSpec:
    """Evaluation grid: per-axis resolution plus the coordinate range."""

    resolution: tuple[int, ...]
    range_lo: float = -1.0
    range_hi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        if len(self.resolution) < 1:
            raise DomainError("domain rank must be >= 1")
        if any(r < 1 for r in self.resolution):
            raise DomainError("axis resolutions must be positive")
        if not self.range_lo < self.range_hi:
            raise DomainError("range_lo must be < range_hi")

    @property
    def rank(self) -> int:
        return len(self.resolution)

    @property
    def num_points(self) -> int:
        return int(np.prod(self.resolution))


def check_same_shape(*arrays: np.ndarray) -> None:
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ShapeError(f"shape mismatch: {a.shape} vs {shape}")


def make_coordinate_tensors(domain: DomainSpec) -> list[np.ndarray]:
    """One tensor per axis holding that axis' coordinate at every grid point.

    Coordinates are linearly spaced, endpoints inclusive:
    ``c = lo + (hi - lo) * i / (res - 1)``.
    """
    if any(r < 2 for r in domain.resolution):
        raise DomainError("coordinate axes need resolution >= 2")
    out = []
    for k, res in enumerate(domain.resolution):
        axis = np.linspace(domain.range_lo, domain.range_hi, res, dtype=np.float64)
        shape = [1] * domain.rank
        shape[k] = res
        grid = np.broadcast_to(axis.reshape(shape), domain.resolution)
        out.append(np.ascontiguousarray(grid, dtype=np.float32))
    return out


def constant_tensor(value: float, domain: DomainSpec) -> np.ndarray:
    return np.full(domain.resolution, np.float32(value), dtype=np.float32)


def map_elementwise(f, args: list[np.ndarray]) -> np.ndarray:
    """Apply an elementwise kernel over fixed-size chunks of the flat range.

    ``f`` receives same-length 1-D float32 slices (or scalars) and must act
    elementwise; the result is independent of the worker-thread count.
    """
    if not args:
        raise ValueError("map_elementwise needs at least one argument")
    check_same_shape(*args)
    shape = args[0].shape
    flats = [np.ascontiguousarray(a, dtype=np.float32).reshape(-1) for a in args]
    n = flats[0].size
    out = np.empty(n, dtype=np.float32)

    def do_chunk(lo: int) -> None:
        hi = min(lo + CHUNK, n)
        with np.errstate(all="ignore"):
            res = f(*[fl[lo:hi] for fl in flats])
            out[lo:hi] = res  # cast to float32 on assignment

    starts = range(0, n, CHUNK)
    if _num_threads == 1 or n <= CHUNK:
        for lo in starts:
            do_chunk(lo)
    else:
        list(_get_pool().map(do_chunk, starts))
    return out.reshape(shape)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean squared error with 64-bit chunked accumulation.

    Any non-finite squared difference makes the result +inf.
    """
    check_same_shape(a, b)
    fa = a.reshape(-1)
    fb = b.reshape(-1)
    n = fa.size
    total = 0.0
    for lo in range(0, n, CHUNK):
        hi = min(lo + CHUNK, n)
        with np.errstate(all="ignore"):
            d = fa[lo:hi].astype(np.float64) - fb[lo:hi].astype(np.float64)
            sq = d * d
        s = float(np.sum(sq))
        if not math.isfinite(s):
            return math.inf
        total += s
    return math.sqrt(total / n)
