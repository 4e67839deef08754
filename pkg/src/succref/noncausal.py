"""Inner and outer rate bounds for two-stage refinement with non-causal degraded side information.

Rates here follow the sum-rate convention: ``r2`` counts the bits of both
stages.  Sources must be degraded, ``X - Z - Y``.  The aux channel is
``q(w1, w2, w3, w4, v | x)``, so the joint always factors through ``X``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .causal import DistortionQuad, InfeasibleTarget
from .decoding import argmin_rule, check_table, rule_costs, rule_distortion
from .prob import AlphabetMismatch, CondPmf, SourceSpec, cmi_array, marginal_entropy
from .search import Candidate, Problem, SearchConfig, pareto, run_search

# joint axis order: (X, Y, Z, W1, W2, W3, W4, V)
X, Y, Z, W1, W2, W3, W4, V = range(8)
AUX_LABELS = ("W1", "W2", "W3", "W4", "V")
DEGRADED_TOL = 1e-6
MARKOV_TOL = 1e-9


class NonDegradedSource(ValueError):
    """The source violates ``X - Z - Y``."""


class ExtraMarkovViolated(ValueError):
    """``I(W2;W3 | X,W1,V)`` exceeds the tolerance of the inner-bound family."""


# caps as offsets added to |X| times the product of the earlier sizes
_CAP_OFFSETS = {"outer": (5, 4, 3, 2, 1), "inner": (6, 5, 4, 3, 2)}


def aux_caps(nx: int, sizes: dict[str, int], family: str) -> dict[str, int]:
    o1, ov, o2, o3, o4 = _CAP_OFFSETS[family]
    w1, v, w2, w3 = sizes["W1"], sizes["V"], sizes["W2"], sizes["W3"]
    return {
        "W1": nx + o1,
        "V": nx * w1 + ov,
        "W2": nx * w1 * v + o2,
        "W3": nx * w1 * w2 * v + o3,
        "W4": nx * w1 * w2 * w3 * v + o4,
    }


@dataclass(frozen=True, eq=False)
class NcAuxChannel:
    """Test channel ``q(w1, w2, w3, w4, v | x)``; sizes are checked against the inner-family caps."""

    cond: CondPmf

    def __post_init__(self):
        if len(self.cond.from_axes) != 1 or len(self.cond.to_axes) != 5:
            raise AlphabetMismatch("non-causal aux channel maps X to (W1, W2, W3, W4, V)")
        self.check_caps("inner")

    @classmethod
    def from_array(cls, q) -> "NcAuxChannel":
        return cls(CondPmf.from_array(q, ["X"], list(AUX_LABELS)))

    @classmethod
    def constant(cls, nx: int) -> "NcAuxChannel":
        return cls.from_array(np.ones((nx, 1, 1, 1, 1, 1)))

    @property
    def q(self) -> np.ndarray:
        return self.cond.mass

    @property
    def nx(self) -> int:
        return self.cond.from_axes[0].size

    @property
    def sizes(self) -> dict[str, int]:
        return {a.label: a.size for a in self.cond.to_axes}

    def check_caps(self, family: str) -> None:
        caps = aux_caps(self.nx, self.sizes, family)
        for k, s in self.sizes.items():
            if s > caps[k]:
                raise ValueError(f"|{k}|={s} exceeds the {family} cap {caps[k]}")


@dataclass(frozen=True, eq=False)
class NcDecoderRuleSet:
    """Tables ``g_y1[y,w1]``, ``g_z1[z,w1,w2,v]``, ``g_y2[y,w1,w3,v]``, ``g_z2[z,w1,w2,w3,w4,v]``."""

    g_y1: np.ndarray
    g_z1: np.ndarray
    g_y2: np.ndarray
    g_z2: np.ndarray

    def tables(self):
        return self.g_y1, self.g_z1, self.g_y2, self.g_z2


@dataclass(frozen=True, eq=False)
class NcRegionPoint:
    r1: float
    r2: float
    achieved: DistortionQuad
    kind: str
    aux: NcAuxChannel
    decoders: NcDecoderRuleSet
    # side-by-side values of the other bound on the same aux, when computed
    extra: dict = field(default_factory=dict)


_OBS = ((Y, W1), (Z, W1, W2, V), (Y, W1, W3, V), (Z, W1, W2, W3, W4, V))
_NAMES = ("g_y1", "g_z1", "g_y2", "g_z2")


def check_degraded(source: SourceSpec, tol: float = DEGRADED_TOL) -> float:
    """Return ``I(X;Y|Z)``, raising :class:`NonDegradedSource` when it exceeds ``tol``."""
    gap = cmi_array(source.pxyz.mass, [0], [1], [2])
    if gap > tol:
        raise NonDegradedSource(f"I(X;Y|Z) = {gap:.3e} > {tol:g}; side information is not degraded")
    return gap


def nc_joint(source: SourceSpec, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[0] != source.sizes[0]:
        raise AlphabetMismatch(f"aux channel input size {q.shape[0]} vs |X|={source.sizes[0]}")
    return source.pxyz.mass[:, :, :, None, None, None, None, None] * q[:, None, None]


def _outer(j: np.ndarray) -> tuple[float, float]:
    r1 = cmi_array(j, [X], [W1], [Y]) + cmi_array(j, [X], [W2, V], [W1, Z])
    r2 = cmi_array(j, [X], [W1, W3, V], [Y]) + cmi_array(j, [X], [W2, W4], [W1, W3, V, Z])
    return r1, r2


def _inner(j: np.ndarray) -> tuple[float, float]:
    r1 = cmi_array(j, [X], [W1], [Y]) + cmi_array(j, [X], [W2, V], [W1, Z])
    r2 = (cmi_array(j, [X], [W1, V, W3], [Y]) + cmi_array(j, [X], [W2], [W1, V, Z])
          + cmi_array(j, [X], [W4], [W1, W2, W3, V, Z]))
    return r1, r2


def extra_markov_residual(j: np.ndarray) -> float:
    return cmi_array(j, [W2], [W3], [X, W1, V])


def outer_rates(source: SourceSpec, aux: NcAuxChannel) -> tuple[float, float]:
    """Lower limits ``(r1, r2)`` of the outer bound at this aux channel."""
    check_degraded(source)
    aux.check_caps("outer")
    return _outer(nc_joint(source, aux.q))


def inner_rates(source: SourceSpec, aux: NcAuxChannel, tol: float = MARKOV_TOL) -> tuple[float, float]:
    """Achievable ``(r1, r2)`` of the inner bound; the aux must make ``W2 - (X,W1,V) - W3`` hold."""
    check_degraded(source)
    j = nc_joint(source, aux.q)
    res = extra_markov_residual(j)
    if res > tol:
        raise ExtraMarkovViolated(f"I(W2;W3|X,W1,V) = {res:.3e} > {tol:g}")
    return _inner(j)


def _costs(source: SourceSpec, j: np.ndarray):
    return [rule_costs(j, X, obs, d) for obs, d in zip(_OBS, source.distortions)]


def nc_optimal_decoders(source: SourceSpec, aux: NcAuxChannel) -> NcDecoderRuleSet:
    check_degraded(source)
    return NcDecoderRuleSet(*[argmin_rule(c) for c in _costs(source, nc_joint(source, aux.q))])


def inner_distortions(source: SourceSpec, aux: NcAuxChannel, dec: NcDecoderRuleSet) -> DistortionQuad:
    """Expected distortions of the four decoders under the composed joint."""
    j = nc_joint(source, aux.q)
    return _distortions(source, j, _costs(source, j), dec)


def _distortions(source, j, costs, dec) -> DistortionQuad:
    recon = [d.shape[1] for d in source.distortions]
    vals = []
    for c, t, k, nm in zip(costs, dec.tables(), recon, _NAMES):
        vals.append(rule_distortion(c, check_table(t, c.shape[:-1], k, nm)))
    return DistortionQuad.of(vals)


def evaluate_nc(source: SourceSpec, aux: NcAuxChannel, kind: str = "inner",
                dec: NcDecoderRuleSet | None = None, tol: float = MARKOV_TOL) -> NcRegionPoint:
    """Rates of the requested bound plus distortions, optimal decoders when ``dec`` is None.

    The other bound's rates are stored in ``extra`` so the gap stays visible;
    for an outer evaluation the inner rates are only added when the aux
    lies in the inner family.
    """
    check_degraded(source)
    j = nc_joint(source, aux.q)
    costs = _costs(source, j)
    if dec is None:
        dec = NcDecoderRuleSet(*[argmin_rule(c) for c in costs])
    dist = _distortions(source, j, costs, dec)
    res = extra_markov_residual(j)
    o1, o2 = _outer(j)
    extra = {"markov_residual": res, "outer_r1": o1, "outer_r2": o2}
    if kind == "outer":
        aux.check_caps("outer")
        r1, r2 = o1, o2
        if res <= tol:
            extra["inner_r1"], extra["inner_r2"] = _inner(j)
    else:
        if res > tol:
            raise ExtraMarkovViolated(f"I(W2;W3|X,W1,V) = {res:.3e} > {tol:g}")
        r1, r2 = _inner(j)
        extra["inner_r1"], extra["inner_r2"] = r1, r2
    return NcRegionPoint(r1, r2, dist, kind, aux, dec, extra)


# ---------------------------------------------------------------------------
# reduced families for the cases where the bounds meet
# ---------------------------------------------------------------------------

class ReducedFamily:
    """Maps a free channel ``q(a, b, c | x)`` onto the full aux channel.

    ``kind`` is one of ``sr_a`` (W2 = V = const; free W1, W3, W4),
    ``sr_b`` (W3 = V = const; free W1, W2, W4), ``lossless_z1``
    (W2 = X, V = W3, W4 = const; free W1, W3) and ``lossless_y2``
    (V = W2, W3 = X, W4 = const; free W1, W2).  Instances are picklable.
    """

    FREE = {"sr_a": 3, "sr_b": 3, "lossless_z1": 2, "lossless_y2": 2}

    def __init__(self, source: SourceSpec, kind: str, sizes: tuple[int, ...]):
        if kind not in self.FREE:
            raise ValueError(f"unknown reduced family {kind!r}")
        if len(sizes) != self.FREE[kind]:
            raise ValueError(f"{kind} needs {self.FREE[kind]} free alphabet sizes")
        self.source, self.kind, self.sizes = source, kind, tuple(int(s) for s in sizes)

    @property
    def width(self) -> int:
        return int(np.prod(self.sizes))

    def full(self, q: np.ndarray) -> np.ndarray:
        nx = q.shape[0]
        f = q.reshape(nx, *self.sizes)
        if self.kind == "sr_a":
            # axes (x, w1, w3, w4) -> (x, w1, w2=1, w3, w4, v=1)
            return f[:, :, None, :, :, None]
        if self.kind == "sr_b":
            # (x, w1, w2, w4) -> (x, w1, w2, w3=1, w4, v=1)
            return f[:, :, :, None, :, None]
        ex = np.eye(nx)
        if self.kind == "lossless_z1":
            a, b = self.sizes
            # q(w1, w3 | x) * 1[w2 = x] * 1[v = w3]
            return np.einsum("xab,xc,bv->xacbv", f, ex, np.eye(b))[:, :, :, :, None, :]
        a, b = self.sizes
        # q(w1, w2 | x) * 1[w3 = x] * 1[v = w2]
        return np.einsum("xab,xc,bv->xabcv", f, ex, np.eye(b))[:, :, :, :, None, :]

    def __call__(self, q: np.ndarray):
        j = nc_joint(self.source, self.full(q))
        r1, r2 = _inner(j)
        dist = np.array([float(c.min(axis=-1).sum()) for c in _costs(self.source, j)])
        return r1, r2, dist


def _copy_start(fam: ReducedFamily, nx: int) -> list[np.ndarray]:
    """Constant start, plus every free variable set to a copy of X when alphabets allow."""
    starts = [np.zeros((nx, fam.width))]
    starts[0][:, 0] = 1.0
    if all(s >= nx for s in fam.sizes):
        q = np.zeros((nx, *fam.sizes))
        for x in range(nx):
            q[(x,) + (x,) * len(fam.sizes)] = 1.0
        starts.append(q.reshape(nx, -1))
    return starts


def _check_nc_feasible(source: SourceSpec, target: DistortionQuad, fam: ReducedFamily, tol: float) -> None:
    nx = source.sizes[0]
    best = None
    for q in _copy_start(fam, nx)[1:]:
        best = DistortionQuad.of(fam(q)[2])
    if best is None:
        # alphabets too small for the copy start: fall back to all-copy aux on the full family
        full = np.zeros((nx,) * 6)
        for x in range(nx):
            full[(x,) * 6] = 1.0
        j = nc_joint(source, full)
        best = DistortionQuad.of(float(c.min(axis=-1).sum()) for c in _costs(source, j))
    if not best.meets(target, tol):
        raise InfeasibleTarget(f"target {tuple(target)} is infeasible; best achievable is {tuple(best)}")


def _search_family(source: SourceSpec, target: DistortionQuad, fam: ReducedFamily,
                   cfg: SearchConfig, kind: str) -> list[NcRegionPoint]:
    nx = source.sizes[0]
    _check_nc_feasible(source, target, fam, cfg.dist_tol)
    problem = Problem(fam, (nx, fam.width), target.as_array(), starts=_copy_start(fam, nx))
    cands: list[Candidate] = run_search(problem, cfg)
    out = []
    for c in pareto(cands, tol=1e-9):
        aux = NcAuxChannel.from_array(fam.full(c.q))
        out.append(evaluate_nc(source, aux, "inner"))
        out[-1] = NcRegionPoint(out[-1].r1, out[-1].r2, out[-1].achieved, kind, aux,
                                out[-1].decoders, out[-1].extra)
    return out


def sr_subcase(target: DistortionQuad) -> str:
    """``sr_a`` when dz1 >= dy1 (checked first), else ``sr_b`` when dy2 == dy1."""
    if target.dz1 >= target.dy1:
        return "sr_a"
    if target.dy2 == target.dy1:
        return "sr_b"
    raise ValueError("target fits neither sub-case: need dz1 >= dy1 or dy2 == dy1")


def sr_special_case(source: SourceSpec, target: DistortionQuad, cfg: SearchConfig = SearchConfig(),
                    sizes: tuple[int, int, int] = (2, 2, 2)) -> list[NcRegionPoint]:
    """Frontier over the reduced family where inner and outer bounds coincide."""
    check_degraded(source)
    sub = sr_subcase(target)
    fam = ReducedFamily(source, sub, sizes)
    return _search_family(source, target, fam, cfg, "sr_case")


def lossless_special_case(source: SourceSpec, which: str, target: DistortionQuad = DistortionQuad(),
                          cfg: SearchConfig = SearchConfig(), sizes: tuple[int, int] = (2, 2)
                          ) -> list[NcRegionPoint]:
    """Frontier when the Z decoder is lossless at stage one or the Y decoder at stage two.

    ``which`` is ``z1_lossless`` or ``y2_lossless``; the corresponding target
    component is forced to zero.
    """
    check_degraded(source)
    if which == "z1_lossless":
        if not source.d_z1.lossless_capable():
            raise ValueError("d_z1 has no zero-cost reconstruction for every source letter")
        target = DistortionQuad(target.dy1, 0.0, target.dy2, target.dz2)
        kind = "lossless_z1"
    elif which == "y2_lossless":
        if not source.d_y2.lossless_capable():
            raise ValueError("d_y2 has no zero-cost reconstruction for every source letter")
        target = DistortionQuad(target.dy1, target.dz1, 0.0, target.dz2)
        kind = "lossless_y2"
    else:
        raise ValueError(f"which must be 'z1_lossless' or 'y2_lossless', got {which!r}")
    fam = ReducedFamily(source, kind, sizes)
    return _search_family(source, target, fam, cfg, "lossless_case")


def lossless_formula(source: SourceSpec, aux: NcAuxChannel, which: str) -> tuple[float, float]:
    """Closed-form rates of the lossless cases, evaluated on the substituted aux."""
    j = nc_joint(source, aux.q)
    if which == "z1_lossless":
        r1 = cmi_array(j, [X], [W1], [Y]) + _h_given(j, [X], [W1, Z])
        r2 = cmi_array(j, [X], [W1, W3], [Y]) + _h_given(j, [X], [W1, W3, Z])
        return r1, r2
    if which == "y2_lossless":
        r1 = cmi_array(j, [X], [W1], [Y]) + cmi_array(j, [X], [W2], [W1, Z])
        return r1, _h_given(j, [X], [Y])
    raise ValueError(f"unknown case {which!r}")


def _h_given(j: np.ndarray, a, given) -> float:
    return marginal_entropy(j, [*a, *given]) - marginal_entropy(j, given)


# ---------------------------------------------------------------------------
# inner versus outer consistency
# ---------------------------------------------------------------------------

def sample_inner_aux(nx: int, rng: np.random.Generator, sizes=(2, 2, 2, 2, 2)) -> np.ndarray:
    """Random aux with ``W2`` and ``W3`` conditionally independent given ``(X, W1, V)``."""
    w1, w2, w3, w4, v = sizes
    alpha = rng.choice([0.3, 1.0, 3.0])
    p_w1v = rng.dirichlet(np.full(w1 * v, alpha), size=nx).reshape(nx, w1, v)
    p_w2 = rng.dirichlet(np.full(w2, alpha), size=(nx, w1, v))
    p_w3 = rng.dirichlet(np.full(w3, alpha), size=(nx, w1, v))
    p_w4 = rng.dirichlet(np.full(w4, alpha), size=(nx, w1, w2, w3, v))
    q = np.einsum("xav,xavb,xavc,xabcvd->xabcdv", p_w1v, p_w2, p_w3, p_w4)
    return q / q.sum(axis=(1, 2, 3, 4, 5), keepdims=True)


@dataclass
class ConsistencyReport:
    samples: int
    r1_mismatches: int
    r2_violations: int
    max_r1_diff: float
    min_r2_gap: float
    max_markov_residual: float
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.r1_mismatches == 0 and self.r2_violations == 0


def verify_inner_subset_outer(source: SourceSpec, samples: int = 200, seed: int = 0,
                              tol: float = 1e-9) -> ConsistencyReport:
    """Compare inner and outer rates on sampled inner-family aux channels with shared decoders.

    The distortions coincide because the decoders do, so domination reduces
    to ``r1`` equality and ``r2_inner >= r2_outer``.  Counterexamples are
    recorded rather than raised.
    """
    check_degraded(source)
    nx = source.sizes[0]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5EED])))
    rep = ConsistencyReport(samples, 0, 0, 0.0, np.inf, 0.0)
    for s in range(samples):
        j = nc_joint(source, sample_inner_aux(nx, rng))
        res = extra_markov_residual(j)
        i1, i2 = _inner(j)
        o1, o2 = _outer(j)
        rep.max_markov_residual = max(rep.max_markov_residual, res)
        rep.max_r1_diff = max(rep.max_r1_diff, abs(i1 - o1))
        rep.min_r2_gap = min(rep.min_r2_gap, i2 - o2)
        if abs(i1 - o1) > tol:
            rep.r1_mismatches += 1
            rep.violations.append({"sample": s, "what": "r1", "inner": i1, "outer": o1})
        if i2 < o2 - tol:
            rep.r2_violations += 1
            rep.violations.append({"sample": s, "what": "r2", "inner": i2, "outer": o2})
    return rep
