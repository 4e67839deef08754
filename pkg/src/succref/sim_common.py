"""Pieces shared by the two random-coding simulators."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .typicality import count_bounds, scan_typical


class CapExceeded(ValueError):
    """Codebooks would need more stored symbols than ``codeword_cap`` allows."""

    def __init__(self, msg: str, report: dict):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class SimConfig:
    """Blocklength, typicality slack and budgets of a simulation run.

    ``delta`` defaults to ``2 / sqrt(n)``.  ``decoder_delta`` is the slack of
    the decoders' typicality tests and defaults to ``2 * delta``.
    ``codeword_cap`` bounds stored symbols (codewords times ``n``);
    ``scan_limit`` bounds how many codewords one encoder search may examine.
    """

    n: int
    delta: float | None = None
    rate_margin: float = 0.15
    trials: int = 100
    seed: int = 0
    codeword_cap: int = 2 ** 22
    scan_limit: int = 2 ** 20
    decoder_delta: float | None = None
    block: int = 4096
    workers: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.decoder_delta is not None and not self.decoder_delta > 0:
            raise ValueError("decoder_delta must be > 0")
        if not self.rate_margin > 0:
            raise ValueError("rate_margin must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.block < 1 or self.scan_limit < 1 or self.codeword_cap < 1:
            raise ValueError("block, scan_limit and codeword_cap must be positive")

    @property
    def typ_delta(self) -> float:
        return self.delta if self.delta is not None else 2.0 / math.sqrt(self.n)

    @property
    def dec_delta(self) -> float:
        return self.decoder_delta if self.decoder_delta is not None else 2.0 * self.typ_delta


def book_size(n: int, rate: float) -> int:
    """``ceil(2 ** (n * rate))`` as an exact integer (rate in bits, clamped at 0)."""
    e = max(n * rate, 0.0)
    if e < 52:
        return max(1, math.ceil(2.0 ** e))
    k = math.floor(e) - 52
    return math.ceil(2.0 ** (e - k)) << k


def seq_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def marginal(joint: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Marginal of ``joint`` on ``axes`` with the axes in the given order."""
    axes = list(axes)
    drop = tuple(i for i in range(joint.ndim) if i not in axes)
    m = joint.sum(axis=drop) if drop else joint
    srt = sorted(axes)
    return np.transpose(m, [srt.index(a) for a in axes])


def combine(seqs: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
    """Mixed-radix index of symbol tuples, first sequence most significant."""
    out = np.zeros(len(seqs[0]), dtype=np.int64)
    for s, k in zip(seqs, sizes):
        out = out * k + np.asarray(s, dtype=np.int64)
    return out


class Typ:
    """Count windows for strong typicality of a fixed tuple of variables."""

    def __init__(self, joint: np.ndarray, axes: Sequence[int], n: int, delta: float):
        m = marginal(joint, axes)
        self.sizes = m.shape
        self.lo, self.hi = count_bounds(m.ravel(), n, delta)

    @property
    def ctx_card(self) -> tuple[int, int]:
        return int(np.prod(self.sizes[:-1], dtype=np.int64)), self.sizes[-1]

    def check(self, seqs: Sequence[np.ndarray]) -> bool:
        idx = combine(seqs, self.sizes)
        c = np.bincount(idx, minlength=len(self.lo))
        return bool(np.all(c >= self.lo) and np.all(c <= self.hi))

    def scan(self, ctx_seqs: Sequence[np.ndarray], book: np.ndarray, max_hits: int = 1) -> np.ndarray:
        """Rows of ``book`` typical with the context; the book is the last variable."""
        ctx = combine(ctx_seqs, self.sizes[:-1]) if ctx_seqs else np.zeros(book.shape[1], dtype=np.int64)
        return scan_typical(ctx, book, self.sizes[-1], self.lo, self.hi, max_hits)


def draw_rows(rng: np.random.Generator, m: int, cond: np.ndarray, ctx: np.ndarray,
              typ: Typ, ctx_seqs: Sequence[np.ndarray], max_rounds: int = 10_000) -> np.ndarray:
    """``m`` codewords drawn per symbol from ``cond[ctx_i]``, atypical ones redrawn.

    ``cond`` has shape ``(n_ctx, card)`` and ``ctx`` holds one context index
    per position (all zeros for an unconditional draw).
    """
    n = len(ctx)
    cdf = np.cumsum(cond, axis=1)[:, :-1][ctx]  # (n, card-1)
    out = np.empty((m, n), dtype=np.uint8)
    todo = np.arange(m)
    for _ in range(max_rounds):
        u = rng.random((len(todo), n))
        out[todo] = (u[:, :, None] >= cdf[None]).sum(axis=2)
        ok = np.zeros(len(todo), dtype=bool)
        ok[typ.scan(ctx_seqs, out[todo], max_hits=len(todo))] = True
        todo = todo[~ok]
        if not len(todo):
            return out
    raise RuntimeError(f"could not draw typical codewords within {max_rounds} rounds")


@dataclass
class SimReport:
    scheme: str
    n: int
    trials: int
    trials_ok: int
    error_counts: dict[str, int]
    empirical_distortions: dict[str, float | None]
    single_letter_distortions: dict[str, float]
    codebook_sizes: dict[str, str]
    config: dict
    decode_failures: dict[str, int] = field(default_factory=dict)
    agreement_violations: int = 0
    rows: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self, with_rows: bool = False) -> dict:
        d = asdict(self)
        if not with_rows:
            d.pop("rows")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_text(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def distortion_means(sums: np.ndarray, count: int) -> dict[str, float | None]:
    keys = ("dy1", "dz1", "dy2", "dz2")
    if count == 0:
        return {k: None for k in keys}
    return {k: float(v / count) for k, v in zip(keys, sums)}
