"""Monte-Carlo run of the five-codebook nested-binning scheme for non-causal side information.

All codebooks are stored explicitly, so the scheme only fits at very short
blocklengths; the total number of stored symbols is checked against
``codeword_cap`` before anything is drawn.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .noncausal import (V, W1, W2, W3, W4, X, Y, Z, NcAuxChannel, NcDecoderRuleSet, check_degraded,
                        evaluate_nc, nc_joint)
from .prob import SourceSpec, cmi_array, sample_flat
from .sim_common import (CapExceeded, SimConfig, SimReport, Typ, book_size, distortion_means,
                         marginal, seq_rng)

_GEN, _SRC = 11, 12
EVENTS = ("e1", "e2", "e3", "e4", "e5", "e6", "e7")


@dataclass(frozen=True)
class NcLayout:
    """Per-parent codebook sizes and bin counts of the five families."""

    m_w1: int
    m_v: int
    m_w2: int
    m_w3: int
    m_w4: int
    bins_w1: int
    bins_v: int
    subbins_v: int
    bins_w2: int
    bins_w3: int
    bins_w4: int

    def totals(self) -> dict[str, int]:
        p_v = self.m_w1
        p_23 = p_v * self.m_v
        p_4 = p_23 * self.m_w2 * self.m_w3
        return {"w1": self.m_w1, "v": p_v * self.m_v, "w2": p_23 * self.m_w2,
                "w3": p_23 * self.m_w3, "w4": p_4 * self.m_w4}

    def report(self, n: int) -> dict:
        t = self.totals()
        rep = {k: {"per_parent": getattr(self, f"m_{k}"), "total": t[k],
                   "bins": getattr(self, f"bins_{k}"), "symbols": t[k] * n} for k in t}
        rep["v"]["subbins_per_bin"] = self.subbins_v
        rep["total_symbols"] = sum(t.values()) * n
        return rep


def _exponents(j: np.ndarray) -> dict[str, float]:
    return {
        "w1": cmi_array(j, [X], [W1]),
        "w1_bin": cmi_array(j, [X], [W1], [Y]),
        "v": cmi_array(j, [X], [V], [W1]),
        "v_bin": cmi_array(j, [X], [V], [W1, Z]),
        "v_sub": cmi_array(j, [Z], [V], [W1]) - cmi_array(j, [Y], [V], [W1]),
        "w2": cmi_array(j, [X], [W2], [W1, V]),
        "w2_bin": cmi_array(j, [X], [W2], [W1, V, Z]),
        "w3": cmi_array(j, [X], [W3], [W1, V]),
        "w3_bin": cmi_array(j, [X], [W3], [W1, V, Y]),
        "w4": cmi_array(j, [X], [W4], [W1, W2, W3, V]),
        "w4_bin": cmi_array(j, [X], [W4], [W1, W2, W3, V, Z]),
    }


def nc_layout(source: SourceSpec, aux: NcAuxChannel, cfg: SimConfig) -> NcLayout:
    j = nc_joint(source, aux.q)
    e = _exponents(j)
    n, m = cfg.n, cfg.rate_margin
    sizes = {k: book_size(n, e[k] + m) for k in ("w1", "v", "w2", "w3", "w4")}
    bins = {k: min(book_size(n, e[k + "_bin"] + m), sizes[k]) for k in sizes}
    bin_v_size = -(-sizes["v"] // bins["v"])
    sub = min(max(1, book_size(n, e["v_sub"])), bin_v_size)
    return NcLayout(sizes["w1"], sizes["v"], sizes["w2"], sizes["w3"], sizes["w4"],
                    bins["w1"], bins["v"], sub, bins["w2"], bins["w3"], bins["w4"])


def _conditional(j: np.ndarray, parents: list[int], child: int) -> np.ndarray:
    """``P(child | parents)`` as a ``(prod parent sizes, |child|)`` table."""
    m = marginal(j, parents + [child])
    m = m.reshape(-1, m.shape[-1])
    s = m.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, m / s, 1.0 / m.shape[1])


def _typical_mask(idx: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Rows of cell-index matrix ``idx`` whose counts lie within ``[lo, hi]``."""
    r, _ = idx.shape
    ncell = len(lo)
    c = np.bincount((idx + np.arange(r)[:, None] * ncell).ravel(), minlength=r * ncell).reshape(r, ncell)
    return np.all((c >= lo) & (c <= hi), axis=1)


def _draw_children(rng, ctx: np.ndarray, m: int, cond: np.ndarray, typ: Typ,
                   max_rounds: int = 10_000) -> np.ndarray:
    """For each parent context row (``ctx`` is ``(P, n)``), ``m`` children drawn per symbol with rejection."""
    p, n = ctx.shape
    card = cond.shape[1]
    cdf = np.cumsum(cond, axis=1)[:, :-1]
    out = np.empty((p * m, n), dtype=np.uint8)
    rctx = np.repeat(ctx, m, axis=0)
    todo = np.arange(p * m)
    for _ in range(max_rounds):
        u = rng.random((len(todo), n))
        out[todo] = (u[:, :, None] >= cdf[rctx[todo]]).sum(axis=2)
        ok = _typical_mask(rctx[todo] * card + out[todo], typ.lo, typ.hi)
        todo = todo[~ok]
        if not len(todo):
            return out.reshape(p, m, n)
    raise RuntimeError(f"could not draw typical codewords within {max_rounds} rounds")


def _split_positions(m: int, nb: int) -> np.ndarray:
    return np.repeat(np.arange(nb), [len(a) for a in np.array_split(np.arange(m), nb)])


def _bin(rng, parents: int, m: int, nb: int) -> np.ndarray:
    """Random equal-size binning of each parent's ``m`` codewords into ``nb`` bins."""
    perm = np.argsort(rng.random((parents, m)), axis=1, kind="stable")
    pos = _split_positions(m, nb)
    out = np.empty((parents, m), dtype=np.int64)
    np.put_along_axis(out, perm, np.broadcast_to(pos, (parents, m)), axis=1)
    return out


@dataclass
class NcCodebooks:
    layout: NcLayout
    n: int
    w1: np.ndarray
    v: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w4: np.ndarray
    bin_w1: np.ndarray
    bin_v: np.ndarray
    sub_v: np.ndarray
    bin_w2: np.ndarray
    bin_w3: np.ndarray
    bin_w4: np.ndarray
    sizes: dict = field(default_factory=dict)


def gen_nc_codebooks(source: SourceSpec, aux: NcAuxChannel, cfg: SimConfig) -> NcCodebooks:
    """Draw all five families and their bins; raises :class:`CapExceeded` before drawing if too large."""
    check_degraded(source)
    lay = nc_layout(source, aux, cfg)
    rep = lay.report(cfg.n)
    if rep["total_symbols"] > cfg.codeword_cap:
        raise CapExceeded(f"non-causal codebooks need {rep['total_symbols']} stored symbols, "
                          f"cap is {cfg.codeword_cap}", rep)
    j = nc_joint(source, aux.q)
    n, d = cfg.n, cfg.typ_delta
    sz = aux.sizes
    sv, s2, s3 = sz["V"], sz["W2"], sz["W3"]
    rng = seq_rng(cfg.seed, _GEN)
    zeros = np.zeros((1, n), dtype=np.int64)
    w1 = _draw_children(rng, zeros, lay.m_w1, marginal(j, [W1])[None, :], Typ(j, [W1], n, d))[0]
    a1 = w1.astype(np.int64)
    v = _draw_children(rng, a1, lay.m_v, _conditional(j, [W1], V), Typ(j, [W1, V], n, d))
    ctx_wv = (a1[:, None, :] * sv + v).reshape(-1, n)
    w2 = _draw_children(rng, ctx_wv, lay.m_w2, _conditional(j, [W1, V], W2), Typ(j, [W1, V, W2], n, d))
    w3 = _draw_children(rng, ctx_wv, lay.m_w3, _conditional(j, [W1, V], W3), Typ(j, [W1, V, W3], n, d))
    # parent context of w4 in axis order (W1, V, W2, W3)
    c4 = ((ctx_wv[:, None, None, :] * s2 + w2[:, :, None, :]) * s3 + w3[:, None, :, :]).reshape(-1, n)
    w4 = _draw_children(rng, c4, lay.m_w4, _conditional(j, [W1, V, W2, W3], W4),
                        Typ(j, [W1, V, W2, W3, W4], n, d))
    m1, mv, m2, m3, m4 = lay.m_w1, lay.m_v, lay.m_w2, lay.m_w3, lay.m_w4
    books = NcCodebooks(
        layout=lay, n=n, w1=w1, v=v,
        w2=w2.reshape(m1, mv, m2, n), w3=w3.reshape(m1, mv, m3, n),
        w4=w4.reshape(m1, mv, m2, m3, m4, n),
        bin_w1=_bin(rng, 1, m1, lay.bins_w1)[0],
        bin_v=_bin(rng, m1, mv, lay.bins_v),
        sub_v=np.zeros((m1, mv), dtype=np.int64),
        bin_w2=_bin(rng, m1 * mv, m2, lay.bins_w2).reshape(m1, mv, m2),
        bin_w3=_bin(rng, m1 * mv, m3, lay.bins_w3).reshape(m1, mv, m3),
        bin_w4=_bin(rng, m1 * mv * m2 * m3, m4, lay.bins_w4).reshape(m1, mv, m2, m3, m4),
        sizes=rep,
    )
    for k in range(m1):
        for b in range(lay.bins_v):
            members = np.flatnonzero(books.bin_v[k] == b)
            if len(members):
                nsub = min(lay.subbins_v, len(members))
                perm = members[rng.permutation(len(members))]
                books.sub_v[k, perm] = _split_positions(len(members), nsub)
    for arr in (books.w1, books.v, books.w2, books.w3, books.w4, books.bin_w1, books.bin_v,
                books.sub_v, books.bin_w2, books.bin_w3, books.bin_w4):
        arr.setflags(write=False)
    return books


def partition_ok(books: NcCodebooks) -> bool:
    """Every codeword sits in exactly one bin, bins cover the codebook, sub-bins refine bins."""
    lay = books.layout

    def check(bins: np.ndarray, nb: int) -> bool:
        flat = bins.reshape(-1, bins.shape[-1])
        for row in flat:
            counts = np.bincount(row, minlength=nb)
            if counts.sum() != len(row) or len(counts) != nb or np.any(row < 0):
                return False
        return True

    ok = all([check(books.bin_w1[None], lay.bins_w1), check(books.bin_v, lay.bins_v),
              check(books.bin_w2, lay.bins_w2), check(books.bin_w3, lay.bins_w3),
              check(books.bin_w4, lay.bins_w4)])
    for k in range(lay.m_w1):
        for b in range(lay.bins_v):
            members = books.bin_v[k] == b
            subs = books.sub_v[k][members]
            if members.any() and (subs.min() < 0 or subs.max() >= lay.subbins_v):
                return False
    return ok


# ---------------------------------------------------------------------------
# encoder and decoders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NcIndices:
    b1: int
    b2: int
    b3: int
    b4s: int
    b5: int
    b6: int


@dataclass(frozen=True)
class NcEncoding:
    event: str | None
    chosen: tuple[int, ...] = ()  # (k, l, a, b, c) codeword indices
    indices: NcIndices | None = None


class NcTypicality:
    """All count windows used by the encoder (``delta``) and decoders (``decoder_delta``)."""

    def __init__(self, source: SourceSpec, aux: NcAuxChannel, cfg: SimConfig):
        j = nc_joint(source, aux.q)
        n, d, dd = cfg.n, cfg.typ_delta, cfg.dec_delta
        self.sizes = aux.sizes
        self.x = Typ(j, [X], n, d)
        self.xw1 = Typ(j, [X, W1], n, d)
        self.xw1v = Typ(j, [X, W1, V], n, d)
        self.xw1vw2 = Typ(j, [X, W1, V, W2], n, d)
        self.xw1vw3 = Typ(j, [X, W1, V, W3], n, d)
        self.five = Typ(j, [X, W1, V, W2, W3], n, d)
        self.six = Typ(j, [X, W1, V, W2, W3, W4], n, d)
        self.y_w1 = Typ(j, [Y, W1], n, dd)
        self.y_v = Typ(j, [Y, W1, V], n, dd)
        self.y_w3 = Typ(j, [Y, W1, V, W3], n, dd)
        self.z_w1 = Typ(j, [Z, W1], n, dd)
        self.z_v = Typ(j, [Z, W1, V], n, dd)
        self.z_w2 = Typ(j, [Z, W1, V, W2], n, dd)
        self.z_w3 = Typ(j, [Z, W1, V, W3], n, dd)
        self.z_w4 = Typ(j, [Z, W1, V, W2, W3, W4], n, dd)


def _first(typ: Typ, ctx, book: np.ndarray) -> int | None:
    hit = typ.scan(ctx, book, 1)
    return int(hit[0]) if len(hit) else None


def encode_nc(x: np.ndarray, books: NcCodebooks, typ: NcTypicality) -> NcEncoding:
    """Sequential first-match search; events e1..e7 follow the order of the searches."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (books.n,):
        raise ValueError(f"x must have length {books.n}")
    if not typ.x.check([x]):
        return NcEncoding("e1")
    k = _first(typ.xw1, [x], books.w1)
    if k is None:
        return NcEncoding("e2")
    w1 = books.w1[k].astype(np.int64)
    l = _first(typ.xw1v, [x, w1], books.v[k])
    if l is None:
        return NcEncoding("e3", (k,))
    v = books.v[k, l].astype(np.int64)
    a = _first(typ.xw1vw2, [x, w1, v], books.w2[k, l])
    if a is None:
        return NcEncoding("e4", (k, l))
    # the w3 search ignores the chosen w2
    b = _first(typ.xw1vw3, [x, w1, v], books.w3[k, l])
    if b is None:
        return NcEncoding("e5", (k, l, a))
    w2 = books.w2[k, l, a].astype(np.int64)
    w3 = books.w3[k, l, b].astype(np.int64)
    if not typ.five.check([x, w1, v, w2, w3]):
        return NcEncoding("e6", (k, l, a, b))
    c = _first(typ.six, [x, w1, v, w2, w3], books.w4[k, l, a, b])
    if c is None:
        return NcEncoding("e7", (k, l, a, b))
    idx = NcIndices(int(books.bin_w1[k]), int(books.bin_v[k, l]), int(books.bin_w2[k, l, a]),
                    int(books.sub_v[k, l]), int(books.bin_w3[k, l, b]), int(books.bin_w4[k, l, a, b, c]))
    return NcEncoding(None, (k, l, a, b, c), idx)


@dataclass(frozen=True)
class NcDecoded:
    status: str  # "ok", "NoneTypical", "AmbiguousBin"
    found: dict[str, int]
    failed_at: str | None = None


def _unique(typ: Typ, ctx, book: np.ndarray, members: np.ndarray) -> tuple[str, int | None]:
    if not len(members):
        return "NoneTypical", None
    hits = typ.scan(ctx, np.ascontiguousarray(book[members]), 2)
    if len(hits) == 0:
        return "NoneTypical", None
    if len(hits) > 1:
        return "AmbiguousBin", None
    return "ok", int(members[hits[0]])


def _run_chain(steps) -> NcDecoded:
    found: dict[str, int] = {}
    for name, fn in steps:
        status, idx = fn(found)
        if status != "ok":
            return NcDecoded(status, found, name)
        found[name] = idx
    return NcDecoded("ok", found)


def decode_nc_y(stage: int, idx: NcIndices, y: np.ndarray, books: NcCodebooks, typ: NcTypicality) -> NcDecoded:
    """Y decoder: stage 1 recovers ``w1`` from bin ``b1``; stage 2 adds ``v`` from sub-bin ``(b2, b4s)`` and ``w3`` from ``b5``."""
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    y = np.asarray(y, dtype=np.int64)

    def w1(f):
        return _unique(typ.y_w1, [y], books.w1, np.flatnonzero(books.bin_w1 == idx.b1))

    def v(f):
        k = f["w1"]
        mem = np.flatnonzero((books.bin_v[k] == idx.b2) & (books.sub_v[k] == idx.b4s))
        return _unique(typ.y_v, [y, books.w1[k]], books.v[k], mem)

    def w3(f):
        k, l = f["w1"], f["v"]
        return _unique(typ.y_w3, [y, books.w1[k], books.v[k, l]], books.w3[k, l],
                       np.flatnonzero(books.bin_w3[k, l] == idx.b5))

    steps = [("w1", w1)] + ([("v", v), ("w3", w3)] if stage == 2 else [])
    return _run_chain(steps)


def decode_nc_z(stage: int, idx: NcIndices, z: np.ndarray, books: NcCodebooks, typ: NcTypicality) -> NcDecoded:
    """Z decoder: ``w1`` (``b1``), ``v`` in the full bin ``b2``, ``w2`` (``b3``); stage 2 adds ``w3`` (``b5``) and ``w4`` (``b6``).

    The sub-bin index ``b4s`` is never read.
    """
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    z = np.asarray(z, dtype=np.int64)
    b1, b2, b3, b5, b6 = idx.b1, idx.b2, idx.b3, idx.b5, idx.b6

    def w1(f):
        return _unique(typ.z_w1, [z], books.w1, np.flatnonzero(books.bin_w1 == b1))

    def v(f):
        k = f["w1"]
        return _unique(typ.z_v, [z, books.w1[k]], books.v[k], np.flatnonzero(books.bin_v[k] == b2))

    def w2(f):
        k, l = f["w1"], f["v"]
        return _unique(typ.z_w2, [z, books.w1[k], books.v[k, l]], books.w2[k, l],
                       np.flatnonzero(books.bin_w2[k, l] == b3))

    def w3(f):
        k, l = f["w1"], f["v"]
        return _unique(typ.z_w3, [z, books.w1[k], books.v[k, l]], books.w3[k, l],
                       np.flatnonzero(books.bin_w3[k, l] == b5))

    def w4(f):
        k, l, a, b = f["w1"], f["v"], f["w2"], f["w3"]
        ctx = [z, books.w1[k], books.v[k, l], books.w2[k, l, a], books.w3[k, l, b]]
        return _unique(typ.z_w4, ctx, books.w4[k, l, a, b], np.flatnonzero(books.bin_w4[k, l, a, b] == b6))

    steps = [("w1", w1), ("v", v), ("w2", w2)] + ([("w3", w3), ("w4", w4)] if stage == 2 else [])
    return _run_chain(steps)


def _trial(source: SourceSpec, books: NcCodebooks, typ: NcTypicality, dec: NcDecoderRuleSet,
           cfg: SimConfig, t: int) -> dict:
    rng = seq_rng(cfg.seed, _SRC, t)
    flat = sample_flat(source.pxyz.mass.ravel(), cfg.n, rng)
    x, y, z = np.unravel_index(flat, source.sizes)
    enc = encode_nc(x, books, typ)
    row = {"trial": t, "event": enc.event or "ok", "decode": None, "agree": None,
           "dy1": None, "dz1": None, "dy2": None, "dz2": None}
    if enc.event is not None:
        return row
    ys = decode_nc_y(2, enc.indices, y, books, typ)
    zs = decode_nc_z(2, enc.indices, z, books, typ)
    fails = [f"{side}:{r.failed_at}:{r.status}" for side, r in (("y", ys), ("z", zs)) if r.status != "ok"]
    if fails:
        row["decode"] = "|".join(fails)
        return row
    row["decode"] = "ok"
    k, l, a, b, c = enc.chosen
    agree = (ys.found == {"w1": k, "v": l, "w3": b}
             and zs.found == {"w1": k, "v": l, "w2": a, "w3": b, "w4": c})
    row["agree"] = bool(agree)
    fy, fz = ys.found, zs.found
    w1y, vy, w3y = books.w1[fy["w1"]], books.v[fy["w1"], fy["v"]], books.w3[fy["w1"], fy["v"], fy["w3"]]
    kz, lz = fz["w1"], fz["v"]
    w1z, vz = books.w1[kz], books.v[kz, lz]
    w2z, w3z = books.w2[kz, lz, fz["w2"]], books.w3[kz, lz, fz["w3"]]
    w4z = books.w4[kz, lz, fz["w2"], fz["w3"], fz["w4"]]
    outs = (dec.g_y1[y, w1y], dec.g_z1[z, w1z, w2z, vz], dec.g_y2[y, w1y, w3y, vy],
            dec.g_z2[z, w1z, w2z, w3z, w4z, vz])
    for key, xr, dm in zip(("dy1", "dz1", "dy2", "dz2"), outs, source.distortions):
        row[key] = float(dm[x, xr].mean())
    return row


def simulate_nc(source: SourceSpec, aux: NcAuxChannel, dec: NcDecoderRuleSet | None, cfg: SimConfig) -> SimReport:
    """Trials keyed by ``(seed, trial)``; a trial succeeds when the encoder and every decoder step succeed."""
    books = gen_nc_codebooks(source, aux, cfg)
    typ = NcTypicality(source, aux, cfg)
    point = evaluate_nc(source, aux, "inner", dec)
    dec = point.decoders
    rows = [_trial(source, books, typ, dec, cfg, t) for t in range(cfg.trials)]
    counts = {e: 0 for e in EVENTS}
    failures: dict[str, int] = {}
    sums = np.zeros(4)
    ok = bad = 0
    for r in rows:
        if r["event"] != "ok":
            counts[r["event"]] += 1
        elif r["decode"] != "ok":
            for f in r["decode"].split("|"):
                failures[f] = failures.get(f, 0) + 1
        else:
            ok += 1
            bad += not r["agree"]
            sums += [r["dy1"], r["dz1"], r["dy2"], r["dz2"]]
    failures["wrong_unique"] = bad
    conf = asdict(cfg)
    conf["typ_delta"], conf["dec_delta"] = cfg.typ_delta, cfg.dec_delta
    return SimReport(
        scheme="noncausal", n=cfg.n, trials=cfg.trials, trials_ok=ok, error_counts=counts,
        empirical_distortions=distortion_means(sums, ok),
        single_letter_distortions=dict(zip(("dy1", "dz1", "dy2", "dz2"), map(float, point.achieved))),
        codebook_sizes={k: str(v) for k, v in _flatten(books.sizes).items()},
        config=conf, decode_failures=failures, agreement_violations=bad, rows=rows)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def implied_log2_sizes(source: SourceSpec, aux: NcAuxChannel, cfg: SimConfig) -> dict[str, float]:
    lay = nc_layout(source, aux, cfg)
    return {k: math.log2(v) for k, v in lay.totals().items()}
