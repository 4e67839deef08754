"""Command-line entry point: ``succref <subcommand> PROBLEM [options]``.

Exit codes: 0 success, 1 input error, 2 infeasible target or codebook cap
exceeded.  Outputs are assembled in memory and written through temporary
files renamed into place, so a failing run leaves no partial files.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .causal import DistortionQuad, InfeasibleTarget, min_rates_causal, separation_check
from .channels import (CapacityNotConverged, GpConfig, causal_state_capacity, dmc_capacity,
                       gelfand_pinsker_capacity)
from .noncausal import (ExtraMarkovViolated, NonDegradedSource, evaluate_nc, lossless_special_case,
                        sr_special_case, verify_inner_subset_outer)
from .problem import (CSV_VERSION, ProblemFile, causal_point_to_dict, problem_from_dict, target_to_dict,
                      witness_doc, witness_point)
from .search import SearchConfig
from .sim_common import CapExceeded, SimConfig
from .sim_causal import simulate_causal
from .sim_noncausal import simulate_nc

DIST_COLS = ("dy1", "dz1", "dy2", "dz2")


class InputError(ValueError):
    """Bad or missing input; maps to exit code 1."""


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def csv_text(cols, rows) -> str:
    lines = [",".join(cols)] + [",".join(fmt(r.get(c)) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(v: float):
    return None if math.isinf(v) else v


def write_atomic(files: dict[str, str], out_dir: Path) -> None:
    """Write every file to a temporary name first, then rename all into place."""
    out_dir.mkdir(parents=True, exist_ok=True)
    temps = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            temps.append((tmp, out_dir / name))
        for tmp, final in temps:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def load_json(path: str) -> tuple[dict, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    try:
        return json.loads(raw), hashlib.sha256(raw).hexdigest()
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def load_problem(path: str) -> tuple[ProblemFile, str]:
    doc, digest = load_json(path)
    try:
        return problem_from_dict(doc), digest
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise InputError(f"{path}: schema error at {where}: {e.message}") from e


def parse_target(vals) -> DistortionQuad:
    try:
        return DistortionQuad.of(float(v) for v in vals)
    except ValueError as e:
        raise InputError(f"bad target {vals}: {e}") from e


def resolve_target(args, prob: ProblemFile, required: bool) -> DistortionQuad | None:
    if getattr(args, "target", None):
        return parse_target(args.target)
    if prob.target is not None:
        return prob.target
    if required:
        raise InputError("a target is required: pass --target or add 'target' to the problem file")
    return None


def search_config(args, prob: ProblemFile) -> SearchConfig:
    p = prob.params.get("search", {})
    return SearchConfig(
        restarts=args.restarts or p.get("restarts", SearchConfig.restarts),
        iters=args.iters or p.get("iters", SearchConfig.iters),
        w_cap=args.w_cap or p.get("w_cap", SearchConfig.w_cap),
        seed=args.seed, workers=args.workers)


def gp_config(args, prob: ProblemFile) -> GpConfig:
    p = prob.params.get("gp", {})
    return GpConfig(u_size=args.u_size or p.get("u_size"),
                    restarts=args.gp_restarts or p.get("restarts", GpConfig.restarts),
                    iters=args.gp_iters or p.get("iters", GpConfig.iters), seed=args.seed)


def sim_config(args, prob: ProblemFile) -> SimConfig:
    p = dict(prob.params.get("sim", {}))
    for key in ("n", "delta", "rate_margin", "trials", "codeword_cap", "scan_limit", "decoder_delta"):
        v = getattr(args, key)
        if v is not None:
            p[key] = v
    if "n" not in p:
        raise InputError("blocklength missing: pass --n or set params.sim.n")
    return SimConfig(seed=args.seed, workers=args.workers, **p)


def _cfg_dict(cfg) -> dict:
    return {k: _finite(v) if isinstance(v, float) else v for k, v in dataclasses.asdict(cfg).items()}


# ---------------------------------------------------------------------------
# subcommands; each returns (files, resolved config, stdout text)
# ---------------------------------------------------------------------------

def _table_files(stem: str, fmt_: str, cols, rows) -> dict[str, str]:
    if fmt_ == "csv":
        return {f"{stem}.csv": csv_text(cols, rows)}
    return {f"{stem}.json": json_text([{c: r.get(c) for c in cols} for r in rows])}


def cmd_region_causal(args, prob: ProblemFile):
    target = resolve_target(args, prob, required=True)
    cfg = search_config(args, prob)
    pts = min_rates_causal(prob.source, target, cfg, args.w1_size, args.w2_size)
    rows = [{"r1": p.r1, "delta_r": p.delta_r, **dict(zip(DIST_COLS, p.achieved))} for p in pts]
    files = _table_files("region_causal", args.format, ("r1", "delta_r") + DIST_COLS, rows)
    files["region_causal_witness.json"] = json_text(witness_doc("causal", pts))
    conf = {"target": target_to_dict(target), "search": _cfg_dict(cfg),
            "w1_size": args.w1_size, "w2_size": args.w2_size}
    return files, conf, f"{len(pts)} frontier points\n"


def cmd_bounds_noncausal(args, prob: ProblemFile):
    src = prob.source
    cfg = search_config(args, prob)
    conf: dict = {"mode": args.mode, "search": _cfg_dict(cfg)}
    files: dict[str, str] = {}
    if args.mode in ("inner", "outer"):
        if prob.nc_aux is None:
            raise InputError(f"--mode {args.mode} evaluates the problem's aux.noncausal channel; none given")
        pts = [evaluate_nc(src, prob.nc_aux, args.mode)]
    elif args.mode == "sr":
        target = resolve_target(args, prob, required=True)
        conf["target"] = target_to_dict(target)
        sizes = tuple(args.sizes) if args.sizes else (2, 2, 2)
        conf["sizes"] = list(sizes)
        pts = sr_special_case(src, target, cfg, sizes)
    elif args.mode in ("lossless-z1", "lossless-y2"):
        target = resolve_target(args, prob, required=False) or DistortionQuad()
        conf["target"] = target_to_dict(target)
        sizes = tuple(args.sizes) if args.sizes else (2, 2)
        conf["sizes"] = list(sizes)
        which = "z1_lossless" if args.mode == "lossless-z1" else "y2_lossless"
        pts = lossless_special_case(src, which, target, cfg, sizes)
    else:
        rep = verify_inner_subset_outer(src, args.samples, args.seed)
        conf["samples"] = args.samples
        summary = {"samples": rep.samples, "r1_mismatches": rep.r1_mismatches,
                   "r2_violations": rep.r2_violations, "max_r1_diff": rep.max_r1_diff,
                   "min_r2_gap": rep.min_r2_gap, "max_markov_residual": rep.max_markov_residual,
                   "ok": rep.ok}
        files.update(_table_files("bounds_noncausal", args.format, list(summary), [summary]))
        files["bounds_noncausal_report.json"] = json_text({**summary, "violations": rep.violations})
        return files, conf, f"consistency ok={rep.ok}\n"
    rows = [{"r1": p.r1, "r2": p.r2, **dict(zip(DIST_COLS, p.achieved)), "kind": p.kind} for p in pts]
    files.update(_table_files("bounds_noncausal", args.format, ("r1", "r2") + DIST_COLS + ("kind",), rows))
    files["bounds_noncausal_witness.json"] = json_text(witness_doc("noncausal", pts, args.mode))
    return files, conf, f"{len(pts)} points\n"


def _capacity_dict(res, rho: float) -> dict:
    return {"capacity": res.capacity, "kind": res.kind, "upper_bound": _finite(res.upper_bound),
            "iterations": res.iterations, "residual": res.residual, "converged": res.converged,
            "rho": rho, "maximizer": res.maximizer}


def cmd_capacity(args, prob: ProblemFile):
    if not prob.channels:
        raise InputError("the problem file has no 'channels' section")
    gcfg = gp_config(args, prob)
    out = {}
    for name, ch in sorted(prob.channels.items()):
        if args.mode == "dmc":
            res = dmc_capacity(ch.averaged(), tol=args.tol)
        elif args.mode == "causal":
            res = causal_state_capacity(ch, tol=args.tol)
        else:
            res = gelfand_pinsker_capacity(ch, gcfg)
        out[name] = _capacity_dict(res, ch.rho)
    doc = {"mode": args.mode, "channels": out}
    files = {"capacity.json": json_text(doc)}
    if args.format == "csv":
        cols = ("channel", "capacity", "kind", "upper_bound", "iterations", "residual", "converged", "rho")
        files["capacity.csv"] = csv_text(cols, [{"channel": k, **v} for k, v in out.items()])
    conf = {"mode": args.mode, "tol": args.tol, "gp": _cfg_dict(gcfg)}
    text = "".join(f"{k}: {fmt(v['capacity'])} ({v['kind']})\n" for k, v in out.items())
    return files, conf, text


def _separation_inputs(args, prob: ProblemFile):
    """``(c1, c2, rho1, rho2)`` from flags, a capacity dump, or the problem's channels."""
    vals = {"c1": args.c1, "c2": args.c2, "rho1": args.rho1, "rho2": args.rho2}
    if args.capacities:
        doc, _ = load_json(args.capacities)
        try:
            chans = doc["channels"]
            dumped = {"c1": chans["stage1"]["capacity"], "c2": chans["stage2"]["capacity"],
                      "rho1": chans["stage1"]["rho"], "rho2": chans["stage2"]["rho"]}
        except (KeyError, TypeError) as e:
            raise InputError(f"{args.capacities} is not a capacity dump with stage1 and stage2") from e
        for k, v in dumped.items():
            if vals[k] is None:
                vals[k] = float(v)
    need = [k for k in ("c1", "c2") if vals[k] is None]
    if need:
        if not {"stage1", "stage2"} <= prob.channels.keys():
            raise InputError("capacities missing: pass --c1/--c2, --capacities, or stage1/stage2 channels")
        ch = {1: prob.channels["stage1"], 2: prob.channels["stage2"]}
        for i in (1, 2):
            if vals[f"c{i}"] is None:
                if args.channel_mode == "causal":
                    vals[f"c{i}"] = causal_state_capacity(ch[i]).capacity
                else:
                    vals[f"c{i}"] = gelfand_pinsker_capacity(ch[i], gp_config(args, prob)).capacity
    for i in (1, 2):
        if vals[f"rho{i}"] is None:
            ch = prob.channels.get(f"stage{i}")
            vals[f"rho{i}"] = ch.rho if ch is not None else 1.0
    return vals


def cmd_separation(args, prob: ProblemFile):
    target = resolve_target(args, prob, required=True)
    cfg = search_config(args, prob)
    v = _separation_inputs(args, prob)
    ok, wit = separation_check(prob.source, target, v["rho1"], v["rho2"], v["c1"], v["c2"], cfg)
    doc = {"feasible": ok, **v, "budget_r1": v["rho1"] * v["c1"], "budget_delta_r": v["rho2"] * v["c2"],
           "target": target_to_dict(target), "witness": causal_point_to_dict(wit) if ok else None}
    files = {"separation.json": json_text(doc)}
    if args.format == "csv":
        row = {"feasible": ok, **v, "r1": wit.r1 if ok else None, "delta_r": wit.delta_r if ok else None}
        files["separation.csv"] = csv_text(("feasible", "c1", "c2", "rho1", "rho2", "r1", "delta_r"), [row])
    conf = {"target": target_to_dict(target), "search": _cfg_dict(cfg), "channel_mode": args.channel_mode,
            **{k: v[k] for k in ("c1", "c2", "rho1", "rho2")}}
    text = "yes\n" if ok else "no\n"
    if ok:
        text += json_text({"r1": wit.r1, "delta_r": wit.delta_r, "aux": causal_point_to_dict(wit)["aux"]})
    return files, conf, text


def cmd_simulate(args, prob: ProblemFile, digests: dict[str, str]):
    cfg = sim_config(args, prob)
    nx = prob.source.sizes[0]
    dec = None
    if args.from_region_witness:
        doc, digests[str(args.from_region_witness)] = load_json(args.from_region_witness)
        scheme, aux, dec = witness_point(doc, nx, args.point)
        if scheme != args.scheme:
            raise InputError(f"witness is for the {scheme} scheme, --scheme is {args.scheme}")
    elif args.scheme == "causal":
        aux = prob.causal_aux
    else:
        aux = prob.nc_aux
    if aux is None:
        raise InputError(f"no {args.scheme} aux channel: add aux.{args.scheme} or use --from-region-witness")
    run = simulate_causal if args.scheme == "causal" else simulate_nc
    rep = run(prob.source, aux, dec, cfg)
    rows = rep.rows
    cols = list(rows[0].keys()) if rows else []
    files = {"simulate.json": json_text(rep.to_dict())}
    if args.format == "csv":
        files["simulate_trials.csv"] = rep.csv_text()
    else:
        files["simulate_trials.json"] = json_text([{c: r[c] for c in cols} for r in rows])
    conf = {"scheme": args.scheme, "sim": _cfg_dict(cfg), "point": args.point}
    errs = sum(rep.error_counts.values())
    return files, conf, f"{rep.trials_ok}/{rep.trials} trials ok, {errs} encoder errors\n"


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def _nonneg_float(s: str) -> float:
    v = float(s)
    if math.isnan(v) or v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallel worker bound (default: available cores)")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--restarts", type=int, help="search restarts")
    search.add_argument("--iters", type=int, help="iterations per restart")
    search.add_argument("--w-cap", type=int, help="cap on each searched aux alphabet")

    gp = argparse.ArgumentParser(add_help=False)
    gp.add_argument("--u-size", type=int, help="|U| for the non-causal state capacity search")
    gp.add_argument("--gp-restarts", type=int)
    gp.add_argument("--gp-iters", type=int)

    tgt = argparse.ArgumentParser(add_help=False)
    tgt.add_argument("--target", nargs=4, metavar=("DY1", "DZ1", "DY2", "DZ2"),
                     help="distortion targets; 'inf' leaves one unconstrained")

    p = argparse.ArgumentParser(prog="succref", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"succref {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    rc = sub.add_parser("region-causal", parents=[common, search, tgt],
                        help="frontier of (R1, R2-R1) with causal side information")
    rc.add_argument("problem")
    rc.add_argument("--w1-size", type=int)
    rc.add_argument("--w2-size", type=int)

    bn = sub.add_parser("bounds-noncausal", parents=[common, search, tgt],
                        help="inner/outer bounds with non-causal degraded side information")
    bn.add_argument("problem")
    bn.add_argument("--mode", required=True,
                    choices=("inner", "outer", "sr", "lossless-z1", "lossless-y2", "consistency"))
    bn.add_argument("--sizes", type=int, nargs="+", help="free aux alphabet sizes of the reduced family")
    bn.add_argument("--samples", type=int, default=200, help="aux samples for --mode consistency")

    cp = sub.add_parser("capacity", parents=[common, gp], help="capacities of the stage channels")
    cp.add_argument("problem")
    cp.add_argument("--mode", required=True, choices=("dmc", "causal", "noncausal"))
    cp.add_argument("--tol", type=float, default=1e-9)

    sp = sub.add_parser("separation", parents=[common, search, gp, tgt],
                        help="check the separation condition for a target")
    sp.add_argument("problem")
    sp.add_argument("--c1", type=_nonneg_float)
    sp.add_argument("--c2", type=_nonneg_float)
    sp.add_argument("--rho1", type=float)
    sp.add_argument("--rho2", type=float)
    sp.add_argument("--capacities", help="JSON written by the capacity subcommand")
    sp.add_argument("--channel-mode", choices=("causal", "noncausal"), default="causal",
                    help="capacity notion when computing from the problem's channels")

    sm = sub.add_parser("simulate", parents=[common], help="Monte-Carlo run of a random-coding scheme")
    sm.add_argument("problem")
    sm.add_argument("--scheme", required=True, choices=("causal", "noncausal"))
    sm.add_argument("--from-region-witness", help="witness JSON from region-causal or bounds-noncausal")
    sm.add_argument("--point", type=int, default=0, help="witness point index")
    sm.add_argument("--n", type=int)
    sm.add_argument("--delta", type=float)
    sm.add_argument("--rate-margin", type=float)
    sm.add_argument("--trials", type=int)
    sm.add_argument("--codeword-cap", type=int)
    sm.add_argument("--scan-limit", type=int)
    sm.add_argument("--decoder-delta", type=float)
    return p


_COMMANDS = {"region-causal": cmd_region_causal, "bounds-noncausal": cmd_bounds_noncausal,
             "capacity": cmd_capacity, "separation": cmd_separation}


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    start = time.time()
    t0 = time.perf_counter()
    try:
        if args.workers < 1:
            raise InputError("--workers must be >= 1")
        prob, digest = load_problem(args.problem)
        digests = {str(args.problem): digest}
        if args.command == "simulate":
            files, conf, text = cmd_simulate(args, prob, digests)
        else:
            files, conf, text = _COMMANDS[args.command](args, prob)
        stem = args.command.replace("-", "_")
        out_dir = Path(args.out_dir)
        manifest = {
            "tool": "succref",
            "version": __version__,
            "command": args.command,
            "argv": list(argv),
            "cwd": os.getcwd(),
            "seed": args.seed,
            "workers": args.workers,
            "format": args.format,
            "csv_version": CSV_VERSION,
            "config": conf,
            "inputs": digests,
            "outputs": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(files.items())},
            "started_at_unix": start,
            "wall_clock_seconds": time.perf_counter() - t0,
        }
        files[f"{stem}_manifest.json"] = json_text(manifest)
        write_atomic(files, out_dir)
    except (InfeasibleTarget, CapExceeded) as e:
        print(f"succref: {e}", file=sys.stderr)
        if isinstance(e, CapExceeded):
            print(json_text(e.report), file=sys.stderr, end="")
        return 2
    except (InputError, NonDegradedSource, ExtraMarkovViolated, CapacityNotConverged, ValueError,
            KeyError, jsonschema.ValidationError) as e:
        print(f"succref: {e}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
