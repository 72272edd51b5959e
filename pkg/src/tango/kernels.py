"""Hot-loop kernels with a compiled core and a numpy fallback.

The Cython extension ``tango._ckernels`` is used when it imports; otherwise,
or when ``TANGO_PURE_PYTHON=1`` is set, the numpy implementation in
``tango._pykernels`` takes over. Both produce identical bits.

Row-parallel work is split across ``TANGO_THREADS`` worker threads (default:
CPU count, capped at 8). Each output row is written by exactly one worker
with a fixed loop order, so the thread count never changes results.
"""
from __future__ import annotations

import contextlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_impl = _pykernels if os.environ.get("TANGO_PURE_PYTHON") == "1" or _ckernels is None else _ckernels

# below this many rows the thread pool costs more than it saves
_MIN_ROWS_PER_TASK = 64


def backend() -> str:
    return "cython" if _impl is _ckernels and _ckernels is not None else "python"


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch the kernel backend (``"cython"`` or ``"python"``)."""
    global _impl
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} not available (have {available_backends()})")
    prev = _impl
    _impl = _BACKENDS[name]
    try:
        yield
    finally:
        _impl = prev


def thread_count() -> int:
    raw = os.environ.get("TANGO_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(os.cpu_count() or 1, 8))


def _run_rows(fn, n_rows: int, *args) -> None:
    workers = min(thread_count(), max(1, n_rows // _MIN_ROWS_PER_TASK))
    if workers <= 1:
        fn(*args, 0, n_rows)
        return
    bounds = np.linspace(0, n_rows, workers + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *args, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        for f in futures:
            f.result()


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the rows of ``x`` (float64, exactly symmetric)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    n = x.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    _run_rows(_impl.sqdist_rows, n, x, out)
    return np.sqrt(out, out=out)


def knn_density(dist: np.ndarray, k: int) -> np.ndarray:
    """exp(-mean squared distance to the ``k`` nearest other points), ``k`` capped at n-1."""
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    n = dist.shape[0]
    k_eff = max(0, min(int(k), n - 1))
    out = np.empty(n, dtype=np.float64)
    _run_rows(_impl.knn_density_rows, n, dist, k_eff, out)
    return out


def delta_distance(dist: np.ndarray, rho: np.ndarray) -> np.ndarray:
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    out = np.empty(dist.shape[0], dtype=np.float64)
    _run_rows(_impl.delta_rows, dist.shape[0], dist, rho, out)
    return out


def assign_nearest(dist: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Label of the nearest center per row, ties to the earlier center. Centers label themselves."""
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.int64)
    out = np.empty(dist.shape[0], dtype=np.int64)
    _run_rows(_impl.assign_rows, dist.shape[0], dist, centers, out)
    out[centers] = np.arange(len(centers))
    return out


def adjacent_cosine(frames: np.ndarray) -> np.ndarray:
    """``(T-1, N)`` cosine between each token and the same cell one frame later; 0 for zero vectors."""
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    T = frames.shape[0]
    out = np.empty((max(T - 1, 0), frames.shape[1]), dtype=np.float64)
    if T > 1:
        _run_rows(_impl.adjacent_cosine_rows, T - 1, frames, out)
    return out
