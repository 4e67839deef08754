"""Posterior-argmin synthesis of deterministic single-letter decoders."""
from __future__ import annotations

from typing import Sequence

import numpy as np

TIE_TOL = 1e-12


def rule_costs(joint: np.ndarray, x_axis: int, obs: Sequence[int], d: np.ndarray) -> np.ndarray:
    """``cost[o..., r] = sum_x P(x, o) d(x, r)`` over the observed axes ``obs``.

    The returned array is indexed by the observed symbols in the order of
    ``obs`` and then by the reconstruction symbol.
    """
    keep = [x_axis, *obs]
    drop = tuple(i for i in range(joint.ndim) if i not in keep)
    m = joint.sum(axis=drop) if drop else joint
    srt = sorted(keep)
    m = np.transpose(m, [srt.index(i) for i in keep])
    return np.tensordot(m, d, axes=([0], [0]))


def argmin_rule(cost: np.ndarray) -> np.ndarray:
    """Per-argument argmin; near-ties resolve to the lowest reconstruction index."""
    best = cost.min(axis=-1, keepdims=True)
    slack = TIE_TOL * (1.0 + np.abs(best))
    return np.argmax(cost <= best + slack, axis=-1).astype(np.int64)


def rule_distortion(cost: np.ndarray, table: np.ndarray) -> float:
    return float(np.take_along_axis(cost, table[..., None], axis=-1).sum())


def check_table(table: np.ndarray, arg_shape: tuple[int, ...], n_recon: int, name: str) -> np.ndarray:
    t = np.asarray(table, dtype=np.int64)
    if t.shape != tuple(arg_shape):
        raise ValueError(f"decoder {name} has shape {t.shape}, expected {tuple(arg_shape)}")
    if t.size and (t.min() < 0 or t.max() >= n_recon):
        raise ValueError(f"decoder {name} outputs outside reconstruction alphabet of size {n_recon}")
    t = t.copy()
    t.setflags(write=False)
    return t
