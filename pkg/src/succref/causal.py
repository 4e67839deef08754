"""Exact rate region for two-stage successive refinement with causal side information.

For a test channel ``q(w1, w2 | x)`` the achievable per-stage rates are
``R1 >= I(X;W1)`` and ``R2 - R1 >= I(X;W2|W1)``; the four decoders act
symbol by symbol on ``(Y, W1)``, ``(Z, W1)``, ``(Y, W1, W2)`` and
``(Z, W1, W2)``.  Because the aux channel conditions on ``X`` alone, the
chain ``(W1, W2) - X - (Y, Z)`` holds by construction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .decoding import argmin_rule, check_table, rule_costs, rule_distortion
from .prob import AlphabetMismatch, CondPmf, SourceSpec, cmi_array
from .search import Candidate, Problem, SearchConfig, pareto, run_search, violation

# joint axis order used throughout: (X, Y, Z, W1, W2)
_X, _Y, _Z, _W1, _W2 = range(5)


# frontier points must improve delta_r by more than this to be kept
FRONTIER_TOL = 1e-4


class InfeasibleTarget(ValueError):
    """No aux channel can meet the requested distortions."""


@dataclass(frozen=True)
class DistortionQuad:
    """Distortion levels ``(dy1, dz1, dy2, dz2)``; ``inf`` means unconstrained."""

    dy1: float = math.inf
    dz1: float = math.inf
    dy2: float = math.inf
    dz2: float = math.inf

    def __post_init__(self):
        for k in ("dy1", "dz1", "dy2", "dz2"):
            v = float(getattr(self, k))
            if math.isnan(v) or v < 0:
                raise ValueError(f"{k} must be >= 0, got {v}")
            object.__setattr__(self, k, v)

    @classmethod
    def of(cls, values) -> "DistortionQuad":
        return cls(*[float(v) for v in values])

    def as_array(self) -> np.ndarray:
        return np.array([self.dy1, self.dz1, self.dy2, self.dz2])

    def meets(self, target: "DistortionQuad", tol: float = 1e-9) -> bool:
        return violation(self.as_array(), target.as_array(), tol) == 0

    def __iter__(self):
        return iter((self.dy1, self.dz1, self.dy2, self.dz2))


@dataclass(frozen=True, eq=False)
class CausalAuxChannel:
    """Test channel ``q(w1, w2 | x)``."""

    cond: CondPmf

    def __post_init__(self):
        if len(self.cond.from_axes) != 1 or len(self.cond.to_axes) != 2:
            raise AlphabetMismatch("causal aux channel maps X to (W1, W2)")
        nx = self.cond.from_axes[0].size
        w1, w2 = self.w1_size, self.w2_size
        if w1 > nx + 5:
            raise ValueError(f"|W1|={w1} exceeds cap |X|+5={nx + 5}")
        if w2 > nx * w1 + 2:
            raise ValueError(f"|W2|={w2} exceeds cap |X||W1|+2={nx * w1 + 2}")

    @classmethod
    def from_array(cls, q) -> "CausalAuxChannel":
        return cls(CondPmf.from_array(q, ["X"], ["W1", "W2"]))

    @classmethod
    def constant(cls, nx: int) -> "CausalAuxChannel":
        return cls.from_array(np.ones((nx, 1, 1)))

    @classmethod
    def copy(cls, nx: int, stage2: bool = False) -> "CausalAuxChannel":
        """``W1 = X`` and, if ``stage2``, also ``W2 = X``; otherwise ``W2`` constant."""
        if stage2:
            q = np.zeros((nx, nx, nx))
            q[np.arange(nx), np.arange(nx), np.arange(nx)] = 1.0
        else:
            q = np.zeros((nx, nx, 1))
            q[np.arange(nx), np.arange(nx), 0] = 1.0
        return cls.from_array(q)

    @property
    def q(self) -> np.ndarray:
        return self.cond.mass

    @property
    def nx(self) -> int:
        return self.cond.from_axes[0].size

    @property
    def w1_size(self) -> int:
        return self.cond.to_axes[0].size

    @property
    def w2_size(self) -> int:
        return self.cond.to_axes[1].size


@dataclass(frozen=True, eq=False)
class CausalDecoderRuleSet:
    """Decoder tables indexed ``g_y1[y, w1]``, ``g_z1[z, w1]``, ``g_y2[y, w1, w2]``, ``g_z2[z, w1, w2]``."""

    g_y1: np.ndarray
    g_z1: np.ndarray
    g_y2: np.ndarray
    g_z2: np.ndarray

    def tables(self):
        return self.g_y1, self.g_z1, self.g_y2, self.g_z2


@dataclass(frozen=True, eq=False)
class CausalRegionPoint:
    r1: float
    delta_r: float
    achieved: DistortionQuad
    aux: CausalAuxChannel
    decoders: CausalDecoderRuleSet
    tag: str = field(default="causal")

    @property
    def r2(self) -> float:
        return self.r1 + self.delta_r


def causal_joint(source: SourceSpec, q: np.ndarray) -> np.ndarray:
    """Dense joint table over ``(X, Y, Z, W1, W2)``."""
    q = np.asarray(q, dtype=float)
    if q.shape[0] != source.sizes[0]:
        raise AlphabetMismatch(f"aux channel input size {q.shape[0]} vs |X|={source.sizes[0]}")
    return source.pxyz.mass[:, :, :, None, None] * q[:, None, None, :, :]


_OBS = ((_Y, _W1), (_Z, _W1), (_Y, _W1, _W2), (_Z, _W1, _W2))


def _costs(source: SourceSpec, joint: np.ndarray):
    return [rule_costs(joint, _X, obs, d) for obs, d in zip(_OBS, source.distortions)]


def _rates(joint: np.ndarray) -> tuple[float, float]:
    return cmi_array(joint, [_X], [_W1]), cmi_array(joint, [_X], [_W2], [_W1])


def optimal_decoders(source: SourceSpec, aux: CausalAuxChannel) -> CausalDecoderRuleSet:
    """Decoders minimising each expected distortion for this aux channel."""
    joint = causal_joint(source, aux.q)
    return CausalDecoderRuleSet(*[argmin_rule(c) for c in _costs(source, joint)])


def evaluate_causal(source: SourceSpec, aux: CausalAuxChannel,
                    dec: CausalDecoderRuleSet | None = None) -> CausalRegionPoint:
    """Rates and distortions of one aux channel and decoder set.

    With ``dec=None`` the optimal decoders are synthesized.
    """
    joint = causal_joint(source, aux.q)
    costs = _costs(source, joint)
    if dec is None:
        dec = CausalDecoderRuleSet(*[argmin_rule(c) for c in costs])
    _, ny, nz = source.sizes
    shapes = ((ny, aux.w1_size), (nz, aux.w1_size),
              (ny, aux.w1_size, aux.w2_size), (nz, aux.w1_size, aux.w2_size))
    names = ("g_y1", "g_z1", "g_y2", "g_z2")
    recon = [d.shape[1] for d in source.distortions]
    tabs = [check_table(t, s, k, nm) for t, s, k, nm in zip(dec.tables(), shapes, recon, names)]
    dec = CausalDecoderRuleSet(*tabs)
    dist = DistortionQuad.of(rule_distortion(c, t) for c, t in zip(costs, tabs))
    r1, dr = _rates(joint)
    return CausalRegionPoint(r1, dr, dist, aux, dec)


class CausalEvaluator:
    """Picklable ``q -> (I(X;W1), I(X;W2|W1), distortions)`` with optimal decoders."""

    def __init__(self, source: SourceSpec, w1: int, w2: int):
        self.source, self.w1, self.w2 = source, w1, w2

    def __call__(self, q: np.ndarray):
        q3 = q.reshape(q.shape[0], self.w1, self.w2)
        joint = causal_joint(self.source, q3)
        dist = np.array([float(c.min(axis=-1).sum()) for c in _costs(self.source, joint)])
        r1, dr = _rates(joint)
        return r1, dr, dist


def default_sizes(nx: int, cap: int) -> tuple[int, int]:
    w1 = min(nx + 5, cap)
    return w1, min(nx * w1 + 2, cap)


def _embed(q: np.ndarray, w1: int, w2: int) -> np.ndarray:
    """Zero-pad a ``(nx, a, b)`` channel into a ``(nx, w1, w2)`` one."""
    out = np.zeros((q.shape[0], w1, w2))
    out[:, :q.shape[1], :q.shape[2]] = q
    return out


def check_feasible(source: SourceSpec, target: DistortionQuad, tol: float = 1e-9) -> CausalRegionPoint:
    """Evaluate ``W1 = W2 = X``, which minimises all four distortions at once."""
    pt = evaluate_causal(source, CausalAuxChannel.copy(source.sizes[0], stage2=True))
    if not pt.achieved.meets(target, tol):
        raise InfeasibleTarget(
            f"target {tuple(target)} is infeasible; best achievable is {tuple(pt.achieved)}")
    return pt


def _starts(nx: int, w1: int, w2: int) -> list[np.ndarray]:
    starts = [_embed(np.ones((nx, 1, 1)), w1, w2)]
    if w1 >= nx:
        starts.append(_embed(CausalAuxChannel.copy(nx).q, w1, w2))
        if w2 >= nx:
            starts.append(_embed(CausalAuxChannel.copy(nx, stage2=True).q, w1, w2))
    return [s.reshape(nx, -1) for s in starts]


def _to_points(source: SourceSpec, cands, w1: int, w2: int) -> list[CausalRegionPoint]:
    pts = []
    for c in cands:
        aux = CausalAuxChannel.from_array(c.q.reshape(-1, w1, w2))
        pts.append(evaluate_causal(source, aux))
    return pts


def min_rates_causal(source: SourceSpec, target: DistortionQuad, cfg: SearchConfig = SearchConfig(),
                     w1_size: int | None = None, w2_size: int | None = None) -> list[CausalRegionPoint]:
    """Non-dominated sample of the ``(R1, R2 - R1)`` frontier meeting ``target``.

    Raises :class:`InfeasibleTarget` when even ``W1 = W2 = X`` misses the target.
    """
    nx = source.sizes[0]
    check_feasible(source, target, cfg.dist_tol)
    d1, d2 = default_sizes(nx, cfg.w_cap)
    w1 = w1_size or d1
    w2 = w2_size or d2
    problem = Problem(CausalEvaluator(source, w1, w2), (nx, w1 * w2), target.as_array(),
                      starts=_starts(nx, w1, w2))
    cands = run_search(problem, cfg)
    return _to_points(source, pareto(cands, FRONTIER_TOL), w1, w2)


@dataclass(frozen=True)
class GridSpec:
    """Simplex grid for the exhaustive oracle.

    Each row ``q(. | x)`` ranges over all pmfs on ``w1 * w2`` cells with
    entries in multiples of ``1 / resolution``, or over ``rows`` if given.
    """

    w1_size: int
    w2_size: int
    resolution: int = 10
    rows: tuple[tuple[float, ...], ...] | None = None
    max_points: int = 200_000


def simplex_grid(k: int, m: int) -> np.ndarray:
    """All compositions of ``m`` into ``k`` parts, divided by ``m``."""
    pts = []
    for bars in itertools.combinations(range(m + k - 1), k - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(m + k - 1 - prev - 1)
        pts.append(row)
    return np.asarray(pts, dtype=float) / m


def brute_force_causal(source: SourceSpec, target: DistortionQuad, grid: GridSpec) -> list[CausalRegionPoint]:
    """Exhaustive scan of grid aux channels with optimal decoders; frontier of the feasible ones."""
    nx = source.sizes[0]
    k = grid.w1_size * grid.w2_size
    rows = np.asarray(grid.rows, dtype=float) if grid.rows is not None else simplex_grid(k, grid.resolution)
    if rows.ndim != 2 or rows.shape[1] != k:
        raise ValueError(f"grid rows must have {k} entries")
    total = rows.shape[0] ** nx
    if total > grid.max_points:
        raise ValueError(f"grid has {total} points, cap is {grid.max_points}")
    ev = CausalEvaluator(source, grid.w1_size, grid.w2_size)
    tgt = target.as_array()
    cands = []
    for combo in itertools.product(range(rows.shape[0]), repeat=nx):
        q = rows[list(combo)]
        r1, dr, dist = ev(q)
        if violation(dist, tgt, 1e-9) == 0:
            cands.append(Candidate(q, r1, dr, dist))
    return _to_points(source, pareto(cands), grid.w1_size, grid.w2_size)


def separation_check(source: SourceSpec, target: DistortionQuad, rho1: float, rho2: float,
                     c1: float, c2: float, cfg: SearchConfig = SearchConfig()
                     ) -> tuple[bool, CausalRegionPoint | None]:
    """Whether ``target`` is reachable with ``I(X;W1) <= rho1 C1`` and ``I(X;W2|W1) <= rho2 C2``.

    The frontier sample is tried first, then a search that minimises the
    rate excess directly.  A ``True`` answer comes with its witness.
    """
    if rho1 <= 0 or rho2 <= 0:
        raise ValueError("rho1 and rho2 must be positive")
    if c1 < 0 or c2 < 0:
        raise ValueError("capacities must be non-negative")
    budgets = (rho1 * c1, rho2 * c2)
    tol = cfg.rate_tol

    def fits(p: CausalRegionPoint) -> bool:
        return p.r1 <= budgets[0] + tol and p.delta_r <= budgets[1] + tol

    for p in min_rates_causal(source, target, cfg):
        if fits(p):
            return True, p
    nx = source.sizes[0]
    w1, w2 = default_sizes(nx, cfg.w_cap)
    problem = Problem(CausalEvaluator(source, w1, w2), (nx, w1 * w2), target.as_array(),
                      starts=_starts(nx, w1, w2), budgets=budgets)
    for c in run_search(problem, cfg):
        if c.rate_a <= budgets[0] + tol and c.rate_b <= budgets[1] + tol:
            p = evaluate_causal(source, CausalAuxChannel.from_array(c.q.reshape(nx, w1, w2)))
            if fits(p) and p.achieved.meets(target, cfg.dist_tol):
                return True, p
    return False, None
