"""Reference computations written independently of the package.

They use plain loops or a different algorithm than the library so that an
agreement between the two is evidence rather than a tautology.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def entropy_loop(probs) -> float:
    total = 0.0
    for v in np.asarray(probs, dtype=float).ravel():
        if v > 0:
            total -= v * math.log2(v)
    return total


def rd_blahut(px, d, target: float, iters: int = 4000) -> float:
    """Rate-distortion function ``R(D)`` by alternating minimisation over the slope.

    For each Lagrange slope the reproduction marginal is iterated to its fixed
    point; the slope is then bisected until the distortion meets ``target``.
    """
    px = np.asarray(px, dtype=float)
    d = np.asarray(d, dtype=float)

    def at_slope(s):
        r = np.full(d.shape[1], 1.0 / d.shape[1])
        a = np.exp(-s * d)
        for _ in range(iters):
            w = r[None, :] * a
            q = w / w.sum(axis=1, keepdims=True)
            r = px @ q
        w = r[None, :] * a
        q = w / w.sum(axis=1, keepdims=True)
        dist = float(np.sum(px[:, None] * q * d))
        joint = px[:, None] * q
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(joint > 0, joint * np.log2(joint / (px[:, None] * r[None, :])), 0.0)
        return float(t.sum()), dist

    lo, hi = 0.0, 60.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        _, dist = at_slope(mid)
        if dist > target:
            lo = mid
        else:
            hi = mid
    return at_slope(hi)[0]


def dmc_capacity_grid(w, step: float) -> float:
    """``max I(A;B)`` over input pmfs on a simplex grid of the given step."""
    w = np.asarray(w, dtype=float)
    na = w.shape[0]
    m = int(round(1.0 / step))
    best = 0.0
    for bars in itertools.combinations(range(m + na - 1), na - 1):
        parts, prev = [], -1
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(m + na - 2 - prev)
        p = np.asarray(parts, dtype=float) / m
        q = p @ w
        val = 0.0
        for a in range(na):
            for b in range(w.shape[1]):
                if p[a] > 0 and w[a, b] > 0:
                    val += p[a] * w[a, b] * math.log2(w[a, b] / q[b])
        best = max(best, val)
    return best


def mi_loop(joint2d) -> float:
    j = np.asarray(joint2d, dtype=float)
    pa, pb = j.sum(axis=1), j.sum(axis=0)
    val = 0.0
    for a in range(j.shape[0]):
        for b in range(j.shape[1]):
            if j[a, b] > 0:
                val += j[a, b] * math.log2(j[a, b] / (pa[a] * pb[b]))
    return val


def best_table_distortion(joint_xo, d) -> float:
    """Minimum of ``E d(X, g(O))`` over every deterministic table ``g`` by enumeration.

    ``joint_xo`` has shape ``(nx, n_obs)``; ``d`` has shape ``(nx, n_recon)``.
    """
    nx, no = joint_xo.shape
    nr = d.shape[1]
    best = math.inf
    for table in itertools.product(range(nr), repeat=no):
        val = sum(joint_xo[x, o] * d[x, table[o]] for x in range(nx) for o in range(no))
        best = min(best, val)
    return best


def bsc(e: float) -> np.ndarray:
    return np.array([[1 - e, e], [e, 1 - e]])


def degraded_pxyz(px1: float, ez: float, ey: float) -> np.ndarray:
    """Binary ``X -> Z -> Y`` with ``Z = BSC(ez)(X)`` and ``Y = BSC(ey)(Z)``; axes ``(X, Y, Z)``."""
    p = np.zeros((2, 2, 2))
    px = (1 - px1, px1)
    for x in range(2):
        for z in range(2):
            for y in range(2):
                p[x, y, z] = px[x] * bsc(ez)[x, z] * bsc(ey)[z, y]
    return p


def no_si_pxyz(px) -> np.ndarray:
    px = np.asarray(px, dtype=float)
    return px[:, None, None] * np.ones((1, 1, 1))


def strategy_grid_capacity(w, step: float = 1e-3) -> float:
    """``max I(T;B)`` over pmfs on four input letters, on the full simplex grid of the given step.

    Vectorised over the last two free coordinates; meant for 4-row channels.
    """
    w = np.asarray(w, dtype=float)
    assert w.shape[0] == 4
    m = int(round(1.0 / step))
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.where(w > 0, np.log2(w), 0.0)
    neg = (w * logw).sum(axis=1)  # -H(B | T = t)
    best = 0.0
    jj, kk = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    for i in range(m + 1):
        ok = jj + kk <= m - i
        j, k = jj[ok], kk[ok]
        p = np.stack([np.full(j.shape, i), j, k, m - i - j - k], axis=1) / m
        q = p @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            hq = -np.where(q > 0, q * np.log2(q), 0.0).sum(axis=1)
        best = max(best, float((hq + p @ neg).max()))
    return best
