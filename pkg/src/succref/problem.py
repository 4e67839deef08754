"""Problem files, aux-channel documents and witness dumps shared by the CLI.

A problem file is one JSON object holding a source, optional stage channels,
optional aux channels, an optional target and per-task parameters.  Unknown
fields are rejected at every level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .causal import CausalAuxChannel, CausalDecoderRuleSet, CausalRegionPoint, DistortionQuad
from .channels import CHANNEL_SCHEMA, StateChannel, channel_from_dict
from .noncausal import AUX_LABELS, NcAuxChannel, NcDecoderRuleSet, NcRegionPoint
from .prob import SOURCE_SCHEMA, SourceSpec, source_from_dict

WITNESS_VERSION = 1
CSV_VERSION = 1

_NUM_OR_NULL = {"type": ["number", "null"], "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_PROB_LIST = {"type": "array", "items": {"type": "number", "minimum": 0}}

CAUSAL_AUX_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["w1", "w2", "q"],
    "properties": {"w1": _POS_INT, "w2": _POS_INT, "q": _PROB_LIST},
}

NC_AUX_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["sizes", "q"],
    "properties": {
        "sizes": {
            "type": "object",
            "additionalProperties": False,
            "required": list(AUX_LABELS),
            "properties": {k: _POS_INT for k in AUX_LABELS},
        },
        "q": _PROB_LIST,
    },
}

TARGET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: _NUM_OR_NULL for k in ("dy1", "dz1", "dy2", "dz2")},
}

PROBLEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["source"],
    "properties": {
        "source": SOURCE_SCHEMA,
        "channels": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"stage1": CHANNEL_SCHEMA, "stage2": CHANNEL_SCHEMA},
        },
        "aux": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"causal": CAUSAL_AUX_SCHEMA, "noncausal": NC_AUX_SCHEMA},
        },
        "target": TARGET_SCHEMA,
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "search": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"restarts": _POS_INT, "iters": _POS_INT, "w_cap": _POS_INT},
                },
                "sim": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n": _POS_INT,
                        "delta": {"type": "number", "exclusiveMinimum": 0},
                        "rate_margin": {"type": "number", "exclusiveMinimum": 0},
                        "trials": _POS_INT,
                        "codeword_cap": _POS_INT,
                        "scan_limit": _POS_INT,
                        "decoder_delta": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "gp": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"u_size": _POS_INT, "restarts": _POS_INT, "iters": _POS_INT},
                },
            },
        },
    },
}


@dataclass
class ProblemFile:
    source: SourceSpec
    channels: dict[str, StateChannel]
    causal_aux: CausalAuxChannel | None
    nc_aux: NcAuxChannel | None
    target: DistortionQuad | None
    params: dict
    doc: dict


def target_from_dict(doc: dict) -> DistortionQuad:
    vals = [doc.get(k) for k in ("dy1", "dz1", "dy2", "dz2")]
    return DistortionQuad.of(math.inf if v is None else v for v in vals)


def target_to_dict(t: DistortionQuad) -> dict:
    return {k: (None if math.isinf(v) else v) for k, v in zip(("dy1", "dz1", "dy2", "dz2"), t)}


def causal_aux_from_dict(doc: dict, nx: int) -> CausalAuxChannel:
    import jsonschema

    jsonschema.validate(doc, CAUSAL_AUX_SCHEMA)
    q = np.asarray(doc["q"], dtype=float)
    shape = (nx, doc["w1"], doc["w2"])
    if q.size != int(np.prod(shape)):
        raise ValueError(f"causal aux q has {q.size} entries, expected {int(np.prod(shape))}")
    return CausalAuxChannel.from_array(q.reshape(shape))


def causal_aux_to_dict(aux: CausalAuxChannel) -> dict:
    return {"w1": aux.w1_size, "w2": aux.w2_size, "q": aux.q.ravel().tolist()}


def nc_aux_from_dict(doc: dict, nx: int) -> NcAuxChannel:
    import jsonschema

    jsonschema.validate(doc, NC_AUX_SCHEMA)
    q = np.asarray(doc["q"], dtype=float)
    shape = (nx, *[doc["sizes"][k] for k in AUX_LABELS])
    if q.size != int(np.prod(shape)):
        raise ValueError(f"non-causal aux q has {q.size} entries, expected {int(np.prod(shape))}")
    return NcAuxChannel.from_array(q.reshape(shape))


def nc_aux_to_dict(aux: NcAuxChannel) -> dict:
    return {"sizes": aux.sizes, "q": aux.q.ravel().tolist()}


def problem_from_dict(doc: dict) -> ProblemFile:
    import jsonschema

    jsonschema.validate(doc, PROBLEM_SCHEMA)
    src = source_from_dict(doc["source"])
    nx = src.sizes[0]
    chans = {k: channel_from_dict(v) for k, v in doc.get("channels", {}).items()}
    aux = doc.get("aux", {})
    return ProblemFile(
        source=src,
        channels=chans,
        causal_aux=causal_aux_from_dict(aux["causal"], nx) if "causal" in aux else None,
        nc_aux=nc_aux_from_dict(aux["noncausal"], nx) if "noncausal" in aux else None,
        target=target_from_dict(doc["target"]) if "target" in doc else None,
        params=doc.get("params", {}),
        doc=doc,
    )


# ---------------------------------------------------------------------------
# witness dumps
# ---------------------------------------------------------------------------

def _dec_to_dict(dec) -> dict:
    return {k: np.asarray(t).tolist() for k, t in zip(("g_y1", "g_z1", "g_y2", "g_z2"), dec.tables())}


def _dec_arrays(doc: dict) -> list[np.ndarray]:
    return [np.asarray(doc[k], dtype=np.int64) for k in ("g_y1", "g_z1", "g_y2", "g_z2")]


def causal_point_to_dict(p: CausalRegionPoint) -> dict:
    return {"r1": p.r1, "delta_r": p.delta_r, "achieved": dict(zip(("dy1", "dz1", "dy2", "dz2"), p.achieved)),
            "aux": causal_aux_to_dict(p.aux), "decoders": _dec_to_dict(p.decoders)}


def nc_point_to_dict(p: NcRegionPoint) -> dict:
    return {"r1": p.r1, "r2": p.r2, "kind": p.kind,
            "achieved": dict(zip(("dy1", "dz1", "dy2", "dz2"), p.achieved)),
            "aux": nc_aux_to_dict(p.aux), "decoders": _dec_to_dict(p.decoders),
            "extra": {k: float(v) for k, v in p.extra.items()}}


def witness_doc(scheme: str, points: list, mode: str | None = None) -> dict:
    conv = causal_point_to_dict if scheme == "causal" else nc_point_to_dict
    doc = {"witness_version": WITNESS_VERSION, "scheme": scheme, "points": [conv(p) for p in points]}
    if mode is not None:
        doc["mode"] = mode
    return doc


def witness_point(doc: dict, nx: int, index: int = 0):
    """``(scheme, aux, decoders)`` of one point of a witness dump."""
    if doc.get("witness_version") != WITNESS_VERSION:
        raise ValueError(f"unsupported witness version {doc.get('witness_version')!r}")
    pts = doc.get("points", [])
    if not -len(pts) <= index < len(pts):
        raise ValueError(f"witness has {len(pts)} points, index {index} out of range")
    p = pts[index]
    if doc["scheme"] == "causal":
        return "causal", causal_aux_from_dict(p["aux"], nx), CausalDecoderRuleSet(*_dec_arrays(p["decoders"]))
    if doc["scheme"] == "noncausal":
        return "noncausal", nc_aux_from_dict(p["aux"], nx), NcDecoderRuleSet(*_dec_arrays(p["decoders"]))
    raise ValueError(f"unknown witness scheme {doc['scheme']!r}")
