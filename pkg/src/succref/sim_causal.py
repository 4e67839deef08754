"""Monte-Carlo run of the two-codebook scheme for causal side information.

Codebooks are virtual: block ``b`` of a codebook is drawn on demand from a
generator keyed by ``(seed, book, parent index, b)``, so a codebook of
``2 ** 80`` entries costs nothing until scanned and every run sees the same
codewords.  The encoder examines codewords in ascending index order and
keeps the first jointly typical one.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .causal import CausalAuxChannel, CausalDecoderRuleSet, causal_joint, evaluate_causal
from .prob import SourceSpec, cmi_array, sample_flat
from .sim_common import (CapExceeded, SimConfig, SimReport, Typ, book_size, distortion_means,
                         draw_rows, seq_rng)

# joint axes of causal_joint: (X, Y, Z, W1, W2)
_X, _W1, _W2 = 0, 3, 4
_BOOK1, _BOOK2, _SRC = 1, 2, 3


class LazyBook:
    """Codebook of ``size`` rows whose blocks are generated deterministically on access."""

    def __init__(self, size: int, n: int, cond: np.ndarray, ctx: np.ndarray, typ: Typ,
                 ctx_seqs: list[np.ndarray], key: tuple[int, ...], block: int):
        self.size, self.n, self.block = size, n, block
        self._cond, self._ctx, self._typ, self._ctx_seqs, self._key = cond, ctx, typ, ctx_seqs, key
        self._cached: tuple[int, np.ndarray] | None = None

    @property
    def n_blocks(self) -> int:
        return -(-self.size // self.block)

    def get_block(self, b: int) -> np.ndarray:
        if not 0 <= b < self.n_blocks:
            raise IndexError(f"block {b} out of range")
        if self._cached is not None and self._cached[0] == b:
            return self._cached[1]
        m = min(self.block, self.size - b * self.block)
        blk = draw_rows(seq_rng(*self._key, b), m, self._cond, self._ctx, self._typ, self._ctx_seqs)
        blk.setflags(write=False)
        self._cached = (b, blk)
        return blk

    def row(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise IndexError(f"codeword {i} out of range for size {self.size}")
        b, r = divmod(i, self.block)
        return self.get_block(b)[r]

    def materialize(self) -> np.ndarray:
        return np.concatenate([self.get_block(b) for b in range(self.n_blocks)])


@dataclass(frozen=True)
class CausalRates:
    r1: float
    delta_r: float
    size1: int
    size2: int


class CausalCodebooks:
    """``c1`` plus one conditional codebook ``c2(k)`` per first-stage index, all virtual."""

    def __init__(self, source: SourceSpec, aux: CausalAuxChannel, cfg: SimConfig):
        self.cfg, self.aux = cfg, aux
        n, d = cfg.n, cfg.typ_delta
        self.joint = causal_joint(source, aux.q)
        r1 = cmi_array(self.joint, [_X], [_W1])
        dr = cmi_array(self.joint, [_X], [_W2], [_W1])
        self.rates = CausalRates(r1, dr, book_size(n, r1 + cfg.rate_margin),
                                 book_size(n, dr + cfg.rate_margin))
        w1w2 = self.joint.sum(axis=(0, 1, 2))
        pw1 = w1w2.sum(axis=1)
        self.p_w1 = pw1
        with np.errstate(invalid="ignore", divide="ignore"):
            self.p_w2_w1 = np.where(pw1[:, None] > 0, w1w2 / pw1[:, None], 1.0 / w1w2.shape[1])
        self.typ_w1 = Typ(self.joint, [_W1], n, d)
        self.typ_w1w2 = Typ(self.joint, [_W1, _W2], n, d)
        self.typ_x = Typ(self.joint, [_X], n, d)
        self.typ_xw1 = Typ(self.joint, [_X, _W1], n, d)
        self.typ_xw1w2 = Typ(self.joint, [_X, _W1, _W2], n, d)
        zeros = np.zeros(n, dtype=np.int64)
        self.c1 = LazyBook(self.rates.size1, n, pw1[None, :], zeros, self.typ_w1, [],
                           (cfg.seed, _BOOK1, 0), cfg.block)
        self._last_c2: tuple[int, LazyBook] | None = None

    def c2(self, k: int) -> LazyBook:
        # the encoder and the decoders ask for the same k back to back; keep the last one
        if self._last_c2 is not None and self._last_c2[0] == k:
            return self._last_c2[1]
        w1 = self.c1.row(k).astype(np.int64)
        book = LazyBook(self.rates.size2, self.cfg.n, self.p_w2_w1, w1, self.typ_w1w2, [w1],
                        (self.cfg.seed, _BOOK2, k), self.cfg.block)
        self._last_c2 = (k, book)
        return book

    def sizes(self) -> dict[str, str]:
        return {"c1": str(self.rates.size1), "c2_per_k": str(self.rates.size2),
                "log2_c1": f"{math.log2(self.rates.size1):.9g}",
                "log2_c2_per_k": f"{math.log2(self.rates.size2):.9g}"}

    def materialize(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Eager copy of every codebook; refused when it would exceed ``codeword_cap``."""
        total = self.rates.size1 * (1 + self.rates.size2) * self.cfg.n
        if total > self.cfg.codeword_cap:
            raise CapExceeded(f"eager codebooks need {total} stored symbols, cap is {self.cfg.codeword_cap}",
                              {"c1": self.rates.size1, "c2_total": self.rates.size1 * self.rates.size2,
                               "symbols": total, "cap": self.cfg.codeword_cap})
        return self.c1.materialize(), [self.c2(k).materialize() for k in range(self.rates.size1)]


def gen_causal_codebooks(source: SourceSpec, aux: CausalAuxChannel, cfg: SimConfig) -> CausalCodebooks:
    if cfg.block * cfg.n > cfg.codeword_cap:
        raise CapExceeded(f"one block of {cfg.block} codewords of length {cfg.n} exceeds cap {cfg.codeword_cap}",
                          {"block_symbols": cfg.block * cfg.n, "cap": cfg.codeword_cap})
    return CausalCodebooks(source, aux, cfg)


@dataclass(frozen=True)
class CausalEncoding:
    k: int | None
    j: int | None
    event: str | None  # None, "e1", "e2", "e3", "e2_limit", "e3_limit"
    scanned1: int = 0
    scanned2: int = 0


def _first_match(book: LazyBook, typ: Typ, ctx_seqs, limit: int) -> tuple[int | None, int, bool]:
    """(index, examined, hit_limit) of the first codeword typical with the context."""
    examined = 0
    for b in range(book.n_blocks):
        blk = book.get_block(b)
        room = limit - examined
        if room <= 0:
            return None, examined, True
        blk = blk[:room]
        hit = typ.scan(ctx_seqs, blk, 1)
        if len(hit):
            return b * book.block + int(hit[0]), examined + int(hit[0]) + 1, False
        examined += len(blk)
    return None, examined, examined >= limit and examined < book.size


def encode_causal(x: np.ndarray, books: CausalCodebooks, cfg: SimConfig | None = None) -> CausalEncoding:
    """First-typical-match encoder; failures are returned as error events."""
    cfg = cfg or books.cfg
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (books.cfg.n,):
        raise ValueError(f"x must have length {books.cfg.n}")
    if not books.typ_x.check([x]):
        return CausalEncoding(None, None, "e1")
    k, s1, lim = _first_match(books.c1, books.typ_xw1, [x], cfg.scan_limit)
    if k is None:
        return CausalEncoding(None, None, "e2_limit" if lim else "e2", s1)
    w1 = books.c1.row(k).astype(np.int64)
    j, s2, lim = _first_match(books.c2(k), books.typ_xw1w2, [x, w1], cfg.scan_limit)
    if j is None:
        return CausalEncoding(k, None, "e3_limit" if lim else "e3", s1, s2)
    return CausalEncoding(k, j, None, s1, s2)


def decode_causal(indices: tuple[int, int], y: np.ndarray, z: np.ndarray, books: CausalCodebooks,
                  dec: CausalDecoderRuleSet) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Symbol-by-symbol reconstructions ``(xhat_y1, xhat_z1, xhat_y2, xhat_z2)``.

    Position ``i`` of each output reads only ``y[i]`` or ``z[i]`` and the
    codewords selected by the indices.
    """
    k, j = indices
    w1 = books.c1.row(k).astype(np.int64)
    w2 = books.c2(k).row(j).astype(np.int64)
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    return dec.g_y1[y, w1], dec.g_z1[z, w1], dec.g_y2[y, w1, w2], dec.g_z2[z, w1, w2]


def _trial(args) -> dict:
    source, books, dec, cfg, t = args
    rng = seq_rng(cfg.seed, _SRC, t)
    flat = sample_flat(source.pxyz.mass.ravel(), cfg.n, rng)
    x, y, z = np.unravel_index(flat, source.sizes)
    enc = encode_causal(x, books, cfg)
    row = {"trial": t, "event": enc.event or "ok", "k": enc.k, "j": enc.j,
           "scanned1": enc.scanned1, "scanned2": enc.scanned2,
           "dy1": None, "dz1": None, "dy2": None, "dz2": None}
    if enc.event is None:
        outs = decode_causal((enc.k, enc.j), y, z, books, dec)
        for key, xr, d in zip(("dy1", "dz1", "dy2", "dz2"), outs, source.distortions):
            row[key] = float(d[x, xr].mean())
    return row


def _trial_chunk(args) -> list[dict]:
    source, books, dec, cfg, ts = args
    return [_trial((source, books, dec, cfg, t)) for t in ts]


EVENTS = ("e1", "e2", "e3", "e2_limit", "e3_limit")


def simulate_causal(source: SourceSpec, aux: CausalAuxChannel, dec: CausalDecoderRuleSet | None,
                    cfg: SimConfig) -> SimReport:
    """Independent trials keyed by ``(seed, trial)``; distortions averaged over error-free trials."""
    books = gen_causal_codebooks(source, aux, cfg)
    point = evaluate_causal(source, aux, dec)
    dec = point.decoders
    ts = list(range(cfg.trials))
    if cfg.workers > 1 and cfg.trials > 1:
        chunks = [ts[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_trial_chunk, [(source, books, dec, cfg, c) for c in chunks]))
        rows = sorted((r for p in parts for r in p), key=lambda r: r["trial"])
    else:
        rows = [_trial((source, books, dec, cfg, t)) for t in ts]
    counts = {e: 0 for e in EVENTS}
    sums = np.zeros(4)
    ok = 0
    for r in rows:
        if r["event"] == "ok":
            ok += 1
            sums += [r["dy1"], r["dz1"], r["dy2"], r["dz2"]]
        else:
            counts[r["event"]] += 1
    conf = asdict(cfg)
    conf["typ_delta"] = cfg.typ_delta
    return SimReport(
        scheme="causal", n=cfg.n, trials=cfg.trials, trials_ok=ok, error_counts=counts,
        empirical_distortions=distortion_means(sums, ok),
        single_letter_distortions=dict(zip(("dy1", "dz1", "dy2", "dz2"), map(float, point.achieved))),
        codebook_sizes=books.sizes(), config=conf, rows=rows)
