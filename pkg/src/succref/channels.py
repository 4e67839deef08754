"""Capacities of the noisy stage channels: plain DMC, causal state, non-causal state.

A state channel is ``P(b | a, s)`` with i.i.d. state ``S ~ P_S`` known to the
encoder.  ``rho`` is the number of channel uses per source symbol.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .prob import Alphabet, CondPmf, JointPmf, cmi_array
from .search import perturb_rows, random_channel


class CapacityNotConverged(RuntimeError):
    def __init__(self, msg: str, best: float):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True, eq=False)
class StateChannel:
    p_b_given_as: CondPmf
    p_s: JointPmf
    rho: float = 1.0

    def __post_init__(self):
        if len(self.p_b_given_as.from_axes) != 2 or len(self.p_b_given_as.to_axes) != 1:
            raise ValueError("state channel must map (A, S) to B")
        if len(self.p_s.axes) != 1 or self.p_s.axes[0].size != self.p_b_given_as.from_axes[1].size:
            raise ValueError("state pmf must be one-dimensional and match the channel's S alphabet")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @classmethod
    def from_arrays(cls, w, p_s=None, rho: float = 1.0) -> "StateChannel":
        """``w`` has shape ``(A, S, B)``, or ``(A, B)`` for a stateless channel."""
        w = np.asarray(w, dtype=float)
        if w.ndim == 2:
            w = w[:, None, :]
        ps = np.ones(1) if p_s is None else np.asarray(p_s, dtype=float)
        return cls(CondPmf.from_array(w, ["A", "S"], ["B"]), JointPmf((Alphabet(ps.size, "S"),), ps), rho)

    @property
    def w(self) -> np.ndarray:
        return self.p_b_given_as.mass

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.w.shape

    def averaged(self) -> np.ndarray:
        """``P(b | a) = sum_s P_S(s) P(b | a, s)``."""
        return np.einsum("asb,s->ab", self.w, self.p_s.mass)


@dataclass
class CapacityResult:
    capacity: float
    maximizer: dict
    iterations: int
    residual: float
    kind: str = "exact"
    upper_bound: float = math.inf
    converged: bool = True
    history: list[float] = field(default_factory=list, repr=False)


def _divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``D(W(.|a) || q)`` for each input letter, in bits."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w > 0, w * np.log2(w / q[None, :]), 0.0)
    return t.sum(axis=1)


def dmc_capacity(w, tol: float = 1e-9, max_iter: int = 100_000) -> CapacityResult:
    """Blahut-Arimoto iteration for ``max_p I(A;B)``.

    The residual is the duality gap between the best upper bound
    ``max_a D(W_a || q)`` and the best ``I`` seen so far, so it never grows.
    The exponent of the multiplicative update is stretched while ``I`` keeps
    rising and reset to the plain step on any drop; nearly useless channels
    otherwise need millions of plain steps.
    """
    w = w.mass if isinstance(w, CondPmf) else np.asarray(w, dtype=float)
    w = w.reshape(w.shape[0], -1)
    if tol <= 0:
        raise ValueError("tol must be positive")
    na = w.shape[0]
    p = np.full(na, 1.0 / na)
    lo, hi = 0.0, math.inf
    best_p = p
    mu = 1.0
    hist = []
    for it in range(1, max_iter + 1):
        q = p @ w
        d = _divergences(w, q)
        val = float(p @ d)
        hi = min(hi, float(d.max()))
        if val >= lo:
            lo, best_p = val, p
            mu = min(mu * 1.5, 2.0 ** 20)
        elif mu > 1.0:
            # overshoot: plain step from the best point
            mu = 1.0
            p = best_p
            q = p @ w
            d = _divergences(w, q)
        gap = max(hi - lo, 0.0)
        hist.append(gap)
        if gap <= tol:
            return CapacityResult(max(lo, 0.0), {"p_a": best_p.tolist()}, it, gap, history=hist)
        p = p * np.exp2(mu * (d - d.max()))
        p /= p.sum()
    raise CapacityNotConverged(f"capacity gap {hist[-1]:.3e} > {tol:g} after {max_iter} iterations", lo)


def strategy_channel(ch: StateChannel, cap: int = 4096) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """DMC whose inputs are the maps ``t: S -> A``; row ``t`` is ``sum_s P(s) P(b | t(s), s)``."""
    na, ns, _ = ch.sizes
    count = na ** ns
    if count > cap:
        raise ValueError(f"strategy alphabet |A|^|S| = {count} exceeds cap {cap}")
    strategies = list(itertools.product(range(na), repeat=ns))
    ps = ch.p_s.mass
    rows = [sum(ps[s] * ch.w[t[s], s] for s in range(ns)) for t in strategies]
    return np.array(rows), strategies


def causal_state_capacity(ch: StateChannel, tol: float = 1e-9, max_iter: int = 100_000,
                          cap: int = 4096) -> CapacityResult:
    wt, strategies = strategy_channel(ch, cap)
    res = dmc_capacity(wt, tol, max_iter)
    p = np.asarray(res.maximizer["p_a"])
    support = [i for i in np.argsort(-p) if p[i] > 1e-12]
    res.maximizer = {
        "strategies": [list(strategies[i]) for i in support],
        "p_strategy": [float(p[i]) for i in support],
    }
    return res


@dataclass(frozen=True)
class GpConfig:
    u_size: int | None = None
    restarts: int = 6
    iters: int = 1500
    step: float = 0.5
    seed: int = 0
    tol: float = 1e-6


def _gp_value(ch: StateChannel, pus: np.ndarray, paus: np.ndarray) -> float:
    # joint over (S, U, B)
    j = np.einsum("s,su,usa,asb->sub", ch.p_s.mass, pus, paus, ch.w)
    return cmi_array(j, [1], [2]) - cmi_array(j, [1], [0])


def _polish(ch: StateChannel, pus, paus, val):
    """Greedy sweep making ``A`` a deterministic function of ``(U, S)`` where that helps."""
    nu, ns, na = paus.shape
    improved = True
    while improved:
        improved = False
        for u in range(nu):
            for s in range(ns):
                for a in range(na):
                    trial = paus.copy()
                    trial[u, s] = 0.0
                    trial[u, s, a] = 1.0
                    v = _gp_value(ch, pus, trial)
                    if v > val + 1e-15:
                        paus, val, improved = trial, v, True
    return paus, val


def _causal_seed(ch: StateChannel, nu: int, tol: float):
    """Shannon-strategy solution written as ``P(u|s) = P(u)`` and ``A = t_u(S)``."""
    na, ns, _ = ch.sizes
    res = causal_state_capacity(ch, tol=min(tol, 1e-9))
    strat = res.maximizer["strategies"][:nu]
    pu = np.zeros(nu)
    pu[:len(strat)] = res.maximizer["p_strategy"][:nu]
    pu /= pu.sum()
    paus = np.zeros((nu, ns, na))
    for u in range(nu):
        t = strat[u] if u < len(strat) else strat[0]
        paus[u, np.arange(ns), t] = 1.0
    return np.tile(pu, (ns, 1)), paus, res.capacity


def gelfand_pinsker_capacity(ch: StateChannel, cfg: GpConfig = GpConfig()) -> CapacityResult:
    """Best found ``I(U;B) - I(U;S)``; a lower bound on the non-causal state capacity.

    ``upper_bound`` is ``min(log2|B|, sum_s P(s) C_s)`` with ``C_s`` the
    capacity when the state is known to both ends.
    """
    na, ns, nb = ch.sizes
    nu = cfg.u_size or na * ns
    if nu < 1:
        raise ValueError("u_size must be >= 1")
    upper = min(math.log2(nb), float(sum(ch.p_s.mass[s] * dmc_capacity(ch.w[:, s, :]).capacity
                                         for s in range(ns))))
    pus0, paus0, c_causal = _causal_seed(ch, nu, cfg.tol)
    best = (_gp_value(ch, pus0, paus0), pus0, paus0)
    converged = True
    total = 0
    for r in range(cfg.restarts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, r, 0x6B])))
        if r == 0:
            pus, paus = pus0.copy(), paus0.copy()
        else:
            pus = random_channel((ns, nu), rng)
            paus = random_channel((nu * ns, na), rng).reshape(nu, ns, na)
        val = _gp_value(ch, pus, paus)
        sigma, last_gain = cfg.step, 0
        for it in range(cfg.iters):
            if rng.random() < 0.5:
                cand_u, cand_a = perturb_rows(pus, sigma, rng), paus
            else:
                cand_u = pus
                cand_a = perturb_rows(paus.reshape(nu * ns, na), sigma, rng).reshape(nu, ns, na)
            v = _gp_value(ch, cand_u, cand_a)
            if v > val:
                if v > val + cfg.tol:
                    last_gain = it
                pus, paus, val = cand_u, cand_a, v
                sigma = min(sigma * 1.3, 2.0)
            else:
                sigma = max(sigma * 0.97, 1e-4)
        total += cfg.iters
        paus, val = _polish(ch, pus, paus, val)
        if last_gain > 0.9 * cfg.iters:
            converged = False
        if val > best[0]:
            best = (val, pus, paus)
    val, pus, paus = best
    return CapacityResult(
        capacity=max(val, 0.0),
        maximizer={"p_u_given_s": pus.tolist(), "p_a_given_us": paus.tolist(), "causal_seed": c_causal},
        iterations=total,
        residual=max(upper - val, 0.0),
        kind="lower_bound",
        upper_bound=upper,
        converged=converged,
    )


def stage_capacity_pair(ch1: StateChannel, ch2: StateChannel, mode: str,
                        cfg: GpConfig = GpConfig()) -> tuple[float, float, float, float]:
    """``(C1, C2, rho1, rho2)`` for the two stage channels."""
    if mode == "causal":
        c1 = causal_state_capacity(ch1).capacity
        c2 = causal_state_capacity(ch2).capacity
    elif mode == "noncausal":
        c1 = gelfand_pinsker_capacity(ch1, cfg).capacity
        c2 = gelfand_pinsker_capacity(ch2, cfg).capacity
    else:
        raise ValueError(f"mode must be 'causal' or 'noncausal', got {mode!r}")
    return c1, c2, ch1.rho, ch2.rho


CHANNEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["alphabets", "p_b_given_as"],
    "properties": {
        "name": {"type": "string"},
        "alphabets": {
            "type": "object",
            "additionalProperties": False,
            "required": ["A", "B"],
            "properties": {k: {"type": "integer", "minimum": 1} for k in ("A", "S", "B")},
        },
        "p_b_given_as": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "p_s": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "rho": {"type": "number", "exclusiveMinimum": 0},
    },
}


def channel_from_dict(doc: dict) -> StateChannel:
    import jsonschema

    jsonschema.validate(doc, CHANNEL_SCHEMA)
    al = doc["alphabets"]
    na, ns, nb = al["A"], al.get("S", 1), al["B"]
    w = np.asarray(doc["p_b_given_as"], dtype=float)
    if w.size != na * ns * nb:
        raise ValueError(f"p_b_given_as has {w.size} entries, expected {na * ns * nb}")
    ps = np.asarray(doc.get("p_s", [1.0 / ns] * ns), dtype=float)
    if ps.size != ns:
        raise ValueError(f"p_s has {ps.size} entries, expected {ns}")
    return StateChannel.from_arrays(w.reshape(na, ns, nb), ps, float(doc.get("rho", 1.0)))


def channel_to_dict(ch: StateChannel) -> dict:
    na, ns, nb = ch.sizes
    return {
        "alphabets": {"A": na, "S": ns, "B": nb},
        "p_b_given_as": ch.w.ravel().tolist(),
        "p_s": ch.p_s.mass.tolist(),
        "rho": ch.rho,
    }
