"""Finite-alphabet probability objects and information measures.

All logarithms are base 2, so every information quantity is in bits.
Symbols of an alphabet of size ``k`` are the integers ``0..k-1``.

Random draws go through numpy's PCG64 bit generator seeded explicitly;
no function in this package touches global random state.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .typicality import count_bounds

PMF_TOL = 1e-12


class AlphabetMismatch(ValueError):
    """Axes or alphabets of two objects do not line up."""


@dataclass(frozen=True)
class Alphabet:
    size: int
    label: str

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValueError(f"alphabet {self.label!r} must have size >= 1")
        object.__setattr__(self, "size", int(self.size))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense pmf over the Cartesian product of ``axes``."""

    axes: tuple[Alphabet, ...]
    mass: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        labels = [a.label for a in axes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate axis labels {labels}")
        mass = _frozen(self.mass)
        if mass.shape != tuple(a.size for a in axes):
            raise AlphabetMismatch(
                f"mass shape {mass.shape} does not match axes "
                f"{[(a.label, a.size) for a in axes]}")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValueError("pmf entries must be finite and non-negative")
        if abs(mass.sum() - 1.0) > PMF_TOL:
            raise ValueError(f"pmf sums to {mass.sum()!r}, not 1")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_array(cls, mass, labels: Sequence[str]) -> "JointPmf":
        mass = np.asarray(mass, dtype=float)
        return cls(tuple(Alphabet(s, l) for s, l in zip(mass.shape, labels)), mass)

    @classmethod
    def uniform(cls, sizes: Sequence[int], labels: Sequence[str]) -> "JointPmf":
        m = np.ones(tuple(sizes))
        return cls.from_array(m / m.sum(), labels)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(a.label for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mass.shape

    def index(self, label: str | int) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise AlphabetMismatch(f"no axis {label!r} in {self.labels}") from None

    def __repr__(self):
        dims = ", ".join(f"{a.label}:{a.size}" for a in self.axes)
        return f"JointPmf({dims})"


@dataclass(frozen=True, eq=False)
class CondPmf:
    """Conditional pmf; ``mass`` has shape ``(*from_sizes, *to_sizes)``."""

    from_axes: tuple[Alphabet, ...]
    to_axes: tuple[Alphabet, ...]
    mass: np.ndarray

    def __post_init__(self):
        fa, ta = tuple(self.from_axes), tuple(self.to_axes)
        mass = _frozen(self.mass)
        want = tuple(a.size for a in fa) + tuple(a.size for a in ta)
        if mass.shape != want:
            raise AlphabetMismatch(f"mass shape {mass.shape}, expected {want}")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValueError("conditional pmf entries must be finite and non-negative")
        rows = mass.reshape(int(np.prod(want[:len(fa)], dtype=int)), -1).sum(axis=1)
        if np.any(np.abs(rows - 1.0) > PMF_TOL):
            raise ValueError(f"conditional pmf rows do not sum to 1 (worst {rows.min()}, {rows.max()})")
        object.__setattr__(self, "from_axes", fa)
        object.__setattr__(self, "to_axes", ta)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_array(cls, mass, from_labels: Sequence[str], to_labels: Sequence[str]) -> "CondPmf":
        mass = np.asarray(mass, dtype=float)
        k = len(from_labels)
        fa = tuple(Alphabet(s, l) for s, l in zip(mass.shape[:k], from_labels))
        ta = tuple(Alphabet(s, l) for s, l in zip(mass.shape[k:], to_labels))
        return cls(fa, ta, mass)


@dataclass(frozen=True, eq=False)
class DistortionMatrix:
    rows: Alphabet
    cols: Alphabet
    d: np.ndarray

    def __post_init__(self):
        d = _frozen(self.d)
        if d.shape != (self.rows.size, self.cols.size):
            raise AlphabetMismatch(f"distortion shape {d.shape} vs ({self.rows.size}, {self.cols.size})")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distortion entries must be finite and non-negative")
        object.__setattr__(self, "d", d)

    @classmethod
    def hamming(cls, size: int, recon_size: int | None = None, label: str = "Xhat") -> "DistortionMatrix":
        k = size if recon_size is None else recon_size
        d = 1.0 - np.eye(size, k)
        return cls(Alphabet(size, "X"), Alphabet(k, label), d)

    def lossless_capable(self) -> bool:
        """True if every source letter has a zero-cost reconstruction at its own index."""
        n = self.rows.size
        return self.cols.size >= n and bool(np.all(np.diag(self.d[:, :n]) == 0))


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Joint source ``P_XYZ`` with the four stage/decoder distortion measures."""

    pxyz: JointPmf
    d_y1: DistortionMatrix
    d_z1: DistortionMatrix
    d_y2: DistortionMatrix
    d_z2: DistortionMatrix
    name: str = field(default="source")

    def __post_init__(self):
        if len(self.pxyz.axes) != 3:
            raise AlphabetMismatch("source pmf must have axes (X, Y, Z)")
        nx = self.pxyz.axes[0].size
        for key in ("d_y1", "d_z1", "d_y2", "d_z2"):
            if getattr(self, key).rows.size != nx:
                raise AlphabetMismatch(f"{key} rows must match |X|={nx}")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.pxyz.shape

    @property
    def distortions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.d_y1.d, self.d_z1.d, self.d_y2.d, self.d_z2.d


# ---------------------------------------------------------------------------
# information measures
# ---------------------------------------------------------------------------

def _entropy_array(mass: np.ndarray) -> float:
    p = np.clip(np.asarray(mass, dtype=float).ravel(), 0.0, None)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def marginal_entropy(mass: np.ndarray, keep: Iterable[int]) -> float:
    """Entropy of the marginal of ``mass`` on the axis indices ``keep``."""
    keep = set(keep)
    if not keep:
        return 0.0
    drop = tuple(i for i in range(mass.ndim) if i not in keep)
    return _entropy_array(mass.sum(axis=drop) if drop else mass)


def cmi_array(mass: np.ndarray, a: Iterable[int], b: Iterable[int], c: Iterable[int] = ()) -> float:
    """``I(A;B|C)`` for axis-index groups of a dense joint table.

    Groups may overlap, so ``I(X; X,V | W)`` evaluates to ``H(X|W)``.
    """
    a, b, c = set(a), set(b), set(c)
    val = (marginal_entropy(mass, a | c) + marginal_entropy(mass, b | c)
           - marginal_entropy(mass, c) - marginal_entropy(mass, a | b | c))
    return max(val, 0.0)


def entropy(p: JointPmf) -> float:
    return _entropy_array(p.mass)


def mutual_information(p: JointPmf) -> float:
    if len(p.axes) != 2:
        raise AlphabetMismatch(f"mutual_information needs 2 axes, got {len(p.axes)}")
    return cmi_array(p.mass, [0], [1])


def conditional_mutual_information(p: JointPmf) -> float:
    """``I(A;B|C)`` for a pmf with axes ordered ``(A, B, C)``."""
    if len(p.axes) != 3:
        raise AlphabetMismatch(f"conditional_mutual_information needs 3 axes, got {len(p.axes)}")
    return cmi_array(p.mass, [0], [1], [2])


def info(p: JointPmf, a: Sequence[str], b: Sequence[str], given: Sequence[str] = ()) -> float:
    """Label-based ``I(a; b | given)`` on any :class:`JointPmf`."""
    idx = p.index
    return cmi_array(p.mass, map(idx, a), map(idx, b), map(idx, given))


def cond_entropy(p: JointPmf, a: Sequence[str], given: Sequence[str] = ()) -> float:
    ia = [p.index(l) for l in a]
    ic = [p.index(l) for l in given]
    return max(marginal_entropy(p.mass, set(ia) | set(ic)) - marginal_entropy(p.mass, ic), 0.0)


def is_markov_chain(p: JointPmf, tol: float = 1e-9) -> bool:
    """Test ``A - B - C`` for a three-axis pmf via ``I(A;C|B) <= tol``."""
    if len(p.axes) != 3:
        raise AlphabetMismatch("is_markov_chain needs 3 axes")
    return cmi_array(p.mass, [0], [2], [1]) <= tol


# ---------------------------------------------------------------------------
# structural operations
# ---------------------------------------------------------------------------

def compose(px: JointPmf, cond: CondPmf) -> JointPmf:
    """Joint pmf of ``px``'s variables followed by ``cond``'s outputs.

    ``cond.from_axes`` must name axes of ``px`` (same labels and sizes);
    the outputs are appended after ``px.axes`` in ``cond.to_axes`` order.
    """
    src = []
    for a in cond.from_axes:
        i = px.index(a.label)
        if px.axes[i].size != a.size:
            raise AlphabetMismatch(f"axis {a.label}: size {px.axes[i].size} vs {a.size}")
        src.append(i)
    clash = set(px.labels) & {a.label for a in cond.to_axes}
    if clash:
        raise AlphabetMismatch(f"output labels {sorted(clash)} already present")
    nj = len(px.axes)
    out = list(range(nj, nj + len(cond.to_axes)))
    mass = np.einsum(px.mass, list(range(nj)), cond.mass, src + out, list(range(nj)) + out)
    return JointPmf(px.axes + cond.to_axes, mass)


def marginalize(p: JointPmf, keep: Sequence[str | int]) -> JointPmf:
    """Marginal on ``keep``; the result keeps the order given in ``keep``."""
    if not keep:
        raise ValueError("keep must name at least one axis")
    idx = [p.index(k) for k in keep]
    if len(set(idx)) != len(idx):
        raise ValueError("keep lists an axis twice")
    drop = tuple(i for i in range(len(p.axes)) if i not in idx)
    m = p.mass.sum(axis=drop) if drop else p.mass
    order = sorted(idx)
    m = np.transpose(m, [order.index(i) for i in idx])
    return JointPmf(tuple(p.axes[i] for i in idx), m)


def expected_distortion(p: JointPmf, d: DistortionMatrix) -> float:
    """``sum p(x, xhat) d(x, xhat)`` for a two-axis pmf ordered ``(X, Xhat)``."""
    if p.shape != d.d.shape:
        raise AlphabetMismatch(f"pmf shape {p.shape} vs distortion shape {d.d.shape}")
    return float((p.mass * d.d).sum())


# ---------------------------------------------------------------------------
# sampling and typicality
# ---------------------------------------------------------------------------

def rng_for(*key: int) -> np.random.Generator:
    """PCG64 generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def sample_flat(mass: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` flat cell indices from a dense table by inverse-cdf lookup."""
    flat = np.clip(np.asarray(mass, dtype=float).ravel(), 0.0, None)
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    # guards the u -> 1.0 edge so zero-mass tail cells are never drawn
    last = int(np.flatnonzero(flat)[-1])
    return np.minimum(idx, last)


def sample_iid(p: JointPmf, n: int, seed: int) -> tuple[np.ndarray, ...]:
    """``n`` i.i.d. draws from ``p``, returned as one int64 sequence per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    flat = sample_flat(p.mass, n, rng_for(seed))
    return tuple(np.asarray(a, dtype=np.int64) for a in np.unravel_index(flat, p.shape))


def joint_counts(seqs: Sequence[np.ndarray], shape: Sequence[int]) -> np.ndarray:
    seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
    n = len(seqs[0])
    if any(len(s) != n for s in seqs):
        raise ValueError("sequences must have equal length")
    flat = np.ravel_multi_index(seqs, tuple(shape))
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(tuple(shape))


def is_jointly_typical(seqs: Sequence[np.ndarray], p: JointPmf, delta: float) -> bool:
    """Strong typicality: every joint-type cell within ``delta`` of ``p``.

    Cells where ``p`` is zero must be empty.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(seqs) != len(p.axes):
        raise AlphabetMismatch(f"{len(seqs)} sequences for {len(p.axes)} axes")
    n = len(seqs[0])
    if n < 1:
        raise ValueError("sequences must be non-empty")
    counts = joint_counts(seqs, p.shape).ravel()
    lo, hi = count_bounds(p.mass.ravel(), n, delta)
    return bool(np.all((counts >= lo) & (counts <= hi)))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

SOURCE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["alphabets", "pxyz", "distortions"],
    "properties": {
        "name": {"type": "string"},
        "alphabets": {
            "type": "object",
            "additionalProperties": False,
            "required": ["X", "Y", "Z"],
            "properties": {k: {"type": "integer", "minimum": 1} for k in "XYZ"},
        },
        "pxyz": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "distortions": {
            "type": "object",
            "additionalProperties": False,
            "required": ["y1", "z1", "y2", "z2"],
            "properties": {
                k: {
                    "oneOf": [
                        {"const": "hamming"},
                        {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                    ]
                }
                for k in ("y1", "z1", "y2", "z2")
            },
        },
    },
}

_RECON_LABELS = {"y1": "Xhat", "z1": "Xtilde", "y2": "Xcheck", "z2": "Xbar"}


def source_from_dict(doc: dict) -> SourceSpec:
    import jsonschema

    jsonschema.validate(doc, SOURCE_SCHEMA)
    a = doc["alphabets"]
    shape = (a["X"], a["Y"], a["Z"])
    flat = np.asarray(doc["pxyz"], dtype=float)
    if flat.size != int(np.prod(shape)):
        raise ValueError(f"pxyz has {flat.size} entries, expected {int(np.prod(shape))}")
    pxyz = JointPmf.from_array(flat.reshape(shape), ["X", "Y", "Z"])
    ds = {}
    for key, lab in _RECON_LABELS.items():
        spec = doc["distortions"][key]
        if spec == "hamming":
            ds[key] = DistortionMatrix.hamming(a["X"], label=lab)
        else:
            m = np.asarray(spec, dtype=float)
            if m.ndim != 2:
                raise ValueError(f"distortion {key} must be a matrix")
            ds[key] = DistortionMatrix(Alphabet(a["X"], "X"), Alphabet(m.shape[1], lab), m)
    return SourceSpec(pxyz, ds["y1"], ds["z1"], ds["y2"], ds["z2"], name=doc.get("name", "source"))


def source_to_dict(src: SourceSpec) -> dict:
    nx, ny, nz = src.sizes
    return {
        "name": src.name,
        "alphabets": {"X": nx, "Y": ny, "Z": nz},
        "pxyz": src.pxyz.mass.ravel().tolist(),
        "distortions": {k: getattr(src, "d_" + k).d.tolist() for k in ("y1", "z1", "y2", "z2")},
    }


def load_source(path: str | Path) -> SourceSpec:
    with open(path) as fh:
        return source_from_dict(json.load(fh))


def make_source(pxyz, d_y1=None, d_z1=None, d_y2=None, d_z2=None, name: str = "source") -> SourceSpec:
    """Build a :class:`SourceSpec` from arrays; missing distortions default to Hamming."""
    pxyz = np.asarray(pxyz, dtype=float)
    nx = pxyz.shape[0]

    def dm(m, lab):
        if m is None:
            return DistortionMatrix.hamming(nx, label=lab)
        m = np.asarray(m, dtype=float)
        return DistortionMatrix(Alphabet(nx, "X"), Alphabet(m.shape[1], lab), m)

    return SourceSpec(JointPmf.from_array(pxyz, ["X", "Y", "Z"]),
                      dm(d_y1, "Xhat"), dm(d_z1, "Xtilde"), dm(d_y2, "Xcheck"), dm(d_z2, "Xbar"),
                      name=name)
