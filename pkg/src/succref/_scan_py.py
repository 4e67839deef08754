"""numpy build of the typicality scan kernel."""
import numpy as np

_CHUNK = 2048


def scan_typical(ctx, book, card, lo, hi, max_hits):
    m, n = book.shape
    ncell = lo.shape[0]
    hits = []
    base = ctx * card
    for start in range(0, m, _CHUNK):
        chunk = book[start:start + _CHUNK].astype(np.int64)
        k = chunk.shape[0]
        cells = base[None, :] + chunk + (np.arange(k) * ncell)[:, None]
        counts = np.bincount(cells.ravel(), minlength=k * ncell).reshape(k, ncell)
        ok = np.all((counts >= lo) & (counts <= hi), axis=1)
        for r in np.flatnonzero(ok):
            hits.append(start + int(r))
            if len(hits) >= max_hits:
                return np.asarray(hits, dtype=np.int64)
    return np.asarray(hits, dtype=np.int64)
