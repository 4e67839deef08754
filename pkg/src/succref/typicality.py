"""Strong-typicality counting shared by the pmf helpers and the simulator.

The scan kernel comes in two builds with identical semantics: a compiled
Cython module (``succref._scan``) and a numpy fallback
(``succref._scan_py``).  The compiled one is used when it imports; set
``SUCCREF_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _scan_py

_EPS = 1e-9

if os.environ.get("SUCCREF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _scan_py
else:
    try:
        from . import _scan as _impl  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _impl = _scan_py

BACKEND: str = "cython" if _impl is not _scan_py else "python"


def count_bounds(target: np.ndarray, n: int, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer count window ``[lo, hi]`` per cell for ``|c/n - t| <= delta``.

    Zero-probability cells get the window ``[0, 0]``.
    """
    t = np.asarray(target, dtype=float).ravel()
    lo = np.ceil(n * (t - delta) - _EPS)
    hi = np.floor(n * (t + delta) + _EPS)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, n)
    zero = t <= 0
    lo[zero] = 0
    hi[zero] = 0
    return lo.astype(np.int64), hi.astype(np.int64)


def scan_typical(ctx: np.ndarray, book: np.ndarray, card: int, lo: np.ndarray, hi: np.ndarray,
                 max_hits: int = 1, impl=None) -> np.ndarray:
    """Rows of ``book`` whose joint type with ``ctx`` falls in the count window.

    ``ctx`` holds flattened context symbols (length ``n``), ``book`` is an
    ``(M, n)`` array of codeword symbols from an alphabet of size ``card``,
    and cell ``c * card + w`` is checked against ``lo``/``hi``.  Rows are
    scanned in order; at most ``max_hits`` row indices are returned.
    """
    impl = _impl if impl is None else impl
    book = np.ascontiguousarray(book, dtype=np.uint8)
    if book.ndim != 2:
        raise ValueError("book must be 2-D")
    return impl.scan_typical(np.ascontiguousarray(ctx, dtype=np.int64), book, int(card),
                             np.ascontiguousarray(lo, dtype=np.int64),
                             np.ascontiguousarray(hi, dtype=np.int64), int(max_hits))
