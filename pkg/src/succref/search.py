"""Seeded multi-start local search over conditional pmfs ``q(w | x)``.

A problem supplies an evaluator mapping a row-stochastic table to two rate
coordinates and four achieved distortions.  Candidates are compared
feasibility first (total distortion excess over the target), then by a
scalar rate objective.  Every feasible accepted candidate is kept, and the
non-dominated ones form the returned frontier sample.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SearchConfig:
    """Budget and schedule of the randomized aux-channel search.

    ``w_cap`` caps every searched auxiliary alphabet; the cardinality
    bounds are only upper limits, so smaller alphabets stay valid.
    """

    restarts: int = 8
    iters: int = 1500
    weights: tuple[float, ...] = (0.1, 1.0, 10.0)
    step: float = 0.5
    seed: int = 0
    dist_tol: float = 1e-9
    rate_tol: float = 1e-9
    w_cap: int = 4
    workers: int = 1


@dataclass
class Problem:
    """Search problem: ``evaluate(q) -> (rate_a, rate_b, distortions[4])``."""

    evaluate: Callable[[np.ndarray], tuple[float, float, np.ndarray]]
    shape: tuple[int, int]
    target: np.ndarray
    starts: Sequence[np.ndarray] = field(default_factory=list)
    # when set, the objective is the excess of (rate_a, rate_b) over these budgets
    budgets: tuple[float, float] | None = None


@dataclass
class Candidate:
    q: np.ndarray
    rate_a: float
    rate_b: float
    dist: np.ndarray


def violation(dist: np.ndarray, target: np.ndarray, tol: float) -> float:
    over = np.where(np.isinf(target), 0.0, dist - target - tol)
    return float(np.clip(over, 0.0, None).sum())


def _objective(ra: float, rb: float, weight: float, budgets) -> float:
    if budgets is None:
        return ra + weight * rb
    return max(ra - budgets[0], 0.0) + max(rb - budgets[1], 0.0)


def random_channel(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    alpha = rng.choice([0.2, 1.0, 5.0])
    return rng.dirichlet(np.full(shape[1], alpha), size=shape[0])


def perturb_rows(q: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    q = q.copy()
    nx, k = q.shape
    if k == 1:
        return q
    rows = np.arange(nx) if rng.random() < 0.3 else [rng.integers(nx)]
    move = rng.random()
    for x in rows:
        row = q[x]
        if move < 0.5:
            row = row * np.exp(sigma * rng.standard_normal(k))
        elif move < 0.85:
            eta = min(1.0, sigma * rng.random())
            tip = np.zeros(k)
            tip[rng.integers(k)] = 1.0
            row = (1.0 - eta) * row + eta * tip
        else:
            i, j = rng.choice(k, size=2, replace=False)
            amt = min(1.0, sigma) * rng.random() * row[i]
            row = row.copy()
            row[i] -= amt
            row[j] += amt
        row = np.clip(row, 0.0, None)
        s = row.sum()
        q[x] = row / s if s > 0 else np.full(k, 1.0 / k)
    return q


def _run_one(problem: Problem, q0: np.ndarray, weight: float, entropy: Sequence[int],
             cfg: SearchConfig) -> list[Candidate]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))
    ra, rb, dist = problem.evaluate(q0)
    cur = Candidate(q0, ra, rb, dist)
    cur_v = violation(dist, problem.target, cfg.dist_tol)
    cur_o = _objective(ra, rb, weight, problem.budgets)
    kept = [cur] if cur_v == 0 else []
    sigma = cfg.step
    for _ in range(cfg.iters):
        if problem.budgets is not None and cur_v == 0 and cur_o <= cfg.rate_tol:
            break
        q = perturb_rows(cur.q, sigma, rng)
        ra, rb, dist = problem.evaluate(q)
        v = violation(dist, problem.target, cfg.dist_tol)
        o = _objective(ra, rb, weight, problem.budgets)
        if cur_v > 0:
            accept = v < cur_v or (v == cur_v and o <= cur_o)
        else:
            accept = v == 0 and o <= cur_o
        if accept:
            improved = (v < cur_v) or (o < cur_o - 1e-15)
            cur, cur_v, cur_o = Candidate(q, ra, rb, dist), v, o
            if v == 0:
                kept.append(cur)
            sigma = min(sigma * 1.3, 2.0) if improved else sigma
        else:
            sigma = max(sigma * 0.97, 1e-4)
    if cur_v == 0 and (not kept or kept[-1] is not cur):
        kept.append(cur)
    return kept


def pareto(cands: Sequence[Candidate], tol: float = 1e-12) -> list[Candidate]:
    """Non-dominated subset in ``(rate_a, rate_b)``, sorted by ``rate_a``.

    Among candidates with equal rates the first one (in input order) is kept.
    """
    order = sorted(range(len(cands)), key=lambda i: (cands[i].rate_a, cands[i].rate_b, i))
    out: list[Candidate] = []
    best_b = math.inf
    for i in order:
        c = cands[i]
        if c.rate_b < best_b - tol:
            out.append(c)
            best_b = c.rate_b
    return out


def tasks_for(problem: Problem, cfg: SearchConfig):
    """Deterministic task list ``(q0, weight, entropy)`` in restart-major order."""
    weights = (0.0,) if problem.budgets is not None else tuple(cfg.weights)
    tasks = []
    for r in range(cfg.restarts):
        for wi, w in enumerate(weights):
            ent = [cfg.seed, r, wi]
            if r < len(problem.starts):
                q0 = np.array(problem.starts[r], dtype=float)
            else:
                q0 = random_channel(problem.shape, np.random.Generator(
                    np.random.PCG64(np.random.SeedSequence(ent + [7]))))
            tasks.append((q0, w, ent))
    return tasks


def run_search(problem: Problem, cfg: SearchConfig) -> list[Candidate]:
    """All feasible candidates visited, merged in task order (seed-stable)."""
    tasks = tasks_for(problem, cfg)
    # the explicit starts are always evaluated, even when restarts < len(starts)
    extra = [np.array(s, dtype=float) for s in problem.starts[cfg.restarts:]]
    results: list[list[Candidate]]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            futs = [ex.submit(_run_one, problem, q0, w, ent, cfg) for q0, w, ent in tasks]
            results = [f.result() for f in futs]
    else:
        results = [_run_one(problem, q0, w, ent, cfg) for q0, w, ent in tasks]
    merged = [c for res in results for c in res]
    for q in extra:
        ra, rb, dist = problem.evaluate(q)
        if violation(dist, problem.target, cfg.dist_tol) == 0:
            merged.append(Candidate(q, ra, rb, dist))
    return merged
