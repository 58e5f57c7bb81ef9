"""Command-line entry point: construct, classify and scripted demo scenarios.

Every command is deterministic in its arguments and seed; outputs are CSV or
JSON with sorted keys and no timestamps.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import ClassifierError, ClassifyParams, classify
from .constructor import (ConstructionError, checkpoint_grid, construct_br_level,
                          construct_irregular_point, construct_level_set_point,
                          construct_saturated, enumerate_K, orbit_bound_trials)
from .measures import MeasureError, bernoulli, measure_to_json, parse_measure
from .potentials import PotentialError, ProductFunctional, RatioFunctional, constant, indicator
from .shift_core import (ShiftError, ShiftSpace, SymbolicSeq, full_shift, load_symbols,
                         pack_symbols, parse_space, symbols_to_text)

EXIT_OK = 0
EXIT_USAGE = 2
PRECONDITION_ERRORS = (ConstructionError, ShiftError, MeasureError, PotentialError, ClassifierError)


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    return buf.getvalue()


def _prepare_out(path: Path, names, force: bool) -> None:
    path.mkdir(parents=True, exist_ok=True)
    clash = [n for n in names if (path / n).exists()]
    if clash and not force:
        raise UsageError(f"{path}: {', '.join(clash)} already exist (use --force)")


def _write(path: Path, name: str, data) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path / name, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
        fh.write(data)


def _export(arr: np.ndarray, alphabet: int, packed: bool) -> tuple[str, bytes | str]:
    if packed:
        return "sequence.bin", pack_symbols(arr, alphabet)
    return "sequence.txt", symbols_to_text(arr)


# ------------------------------------------------------------- construct

def cmd_construct(args) -> int:
    out = Path(args.out)
    seq_name = "sequence.bin" if args.packed else "sequence.txt"
    if args.level is not None:
        space = parse_space(args.space) if args.space else full_shift(3)
        _prepare_out(out, [seq_name, "schedule.json", "certificate.csv", "manifest.json"], args.force)
        seq, manifest = construct_br_level(space, args.level, seed=args.seed)
        arr = seq.prefix(seq.horizon)
        name, data = _export(arr, space.alphabet, args.packed)
        sched = manifest["schedule"]
        _write(out, name, data)
        _write(out, "schedule.json", _dump(sched))
        _write(out, "certificate.csv", _certificate_rows(sched["certificate"]))
        _write(out, "manifest.json", _dump(manifest))
        print(f"level {args.level}: target {manifest['target']}, {arr.size} symbols -> {out}")
        return EXIT_OK
    if not args.k:
        raise UsageError("construct needs --k measures or --level")
    gens = [parse_measure(t) for t in args.k]
    K = enumerate_K(gens, args.cycles)
    space = parse_space(args.space) if args.space else full_shift(K.alphabet)
    _prepare_out(out, [seq_name, "schedule.json", "certificate.csv"], args.force)
    seq, sched = construct_saturated(space, K, args.transitive, args.stages, args.seed)
    arr = seq.prefix(seq.horizon)
    name, data = _export(arr, space.alphabet, args.packed)
    _write(out, name, data)
    _write(out, "schedule.json", sched.to_json() + "\n")
    _write(out, "certificate.csv", sched.certificate_csv())
    last = sched.certificate[-1]
    print(f"{sched.total} symbols, final distance {last.distance:.6g} (bound {last.bound:.6g}) -> {out}")
    return EXIT_OK


def _certificate_rows(cert: list) -> str:
    lines = ["k,M_k,distance,bound,nominal,slack,holds"]
    for c in cert:
        lines.append(f"{c['k']},{c['M']},{c['distance']!r},{c['bound']!r},{c['nominal']!r},"
                     f"{c['slack']!r},{int(c['holds'])}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- classify

def _read_sequence(path: Path, space_text: str | None, manifest: dict | None) -> SymbolicSeq:
    raw = path.read_bytes()
    arr, alphabet = load_symbols(raw)
    if arr.size == 0:
        raise UsageError(f"{path} holds no symbols")
    if space_text:
        space = parse_space(space_text)
    elif manifest is not None:
        space = ShiftSpace.from_json(manifest["space"])
    else:
        space = full_shift(max(2, alphabet or 0, int(arr.max()) + 1))
    return SymbolicSeq.from_array(space, arr, label=path.name)


def cmd_classify(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text()) if args.manifest else None
    seq = _read_sequence(Path(args.file), args.space, manifest)
    m = args.m
    checkpoints = None
    if manifest is not None:
        res = manifest["resolution"]
        m = res["m"] if m is None else m
        checkpoints = res["checkpoints"]
    m = 3 if m is None else m
    if seq.horizon < m:
        raise UsageError(f"sequence shorter than the word depth {m}")
    horizon = seq.horizon - m + 1
    if args.horizon is not None:
        horizon = args.horizon
    elif manifest is not None:
        horizon = min(horizon, manifest["resolution"]["horizon"])
    if checkpoints is not None:
        checkpoints = [c for c in checkpoints if c <= horizon]
    refs = tuple(parse_measure(t) for t in args.reference)
    params = ClassifyParams(horizon, m=m, J=args.J, checkpoints=checkpoints, references=refs)
    report = classify(seq, params)
    body = report.to_json() + "\n"
    if args.out:
        target = Path(args.out)
        if target.exists() and not args.force:
            raise UsageError(f"{target} already exists (use --force)")
        target.write_text(body)
    else:
        sys.stdout.write(body)
    if args.table:
        sys.stderr.write(report.table())
    return EXIT_OK


# ----------------------------------------------------------------- demos

def _demo_orbit_bound(args, out: Path):
    reports = orbit_bound_trials(100, args.seed)
    rows = [[i, r.blocks, r.length, repr(r.left), repr(r.right), repr(r.boundary), int(r.passed)]
            for i, r in enumerate(reports)]
    files = {"orbit_bound.csv": _rows_csv(["case", "blocks", "length", "left", "right",
                                           "boundary", "pass"], rows)}
    passed = sum(r.passed for r in reports)
    summary = {"seed": args.seed, "cases": len(reports), "passed": passed}
    return files, summary, f"{passed}/{len(reports)} pass"


def _demo_level_set(args, out: Path):
    phi, psi = indicator((1,)), constant(1.0)
    mu1, mu2 = bernoulli(0.2), bernoulli(0.8)
    seq, theta, sched = construct_level_set_point(None, phi, psi, args.a, mu1, mu2, args.seed)
    H = sched.total
    grid = checkpoint_grid(H)
    run = RatioFunctional(phi, psi).running(seq, H)
    rows = [[n, repr(float(run[n - 1]))] for n in grid]
    final = float(run[H - 1])
    summary = {"seed": args.seed, "a": args.a, "theta": theta, "horizon": H,
               "final_ratio": final, "deviation": abs(final - args.a),
               "mu1": measure_to_json(mu1), "mu2": measure_to_json(mu2)}
    files = {"ratio_trace.csv": _rows_csv(["n", "ratio"], rows)}
    return files, summary, f"theta {theta:.6g}, final ratio {final:.6g}"


def _demo_irregular(args, out: Path):
    phi, psi = indicator((1,)), constant(1.0)
    nu1, nu2 = bernoulli(0.1), bernoulli(0.9)
    seq, sched = construct_irregular_point(None, phi, psi, nu1, nu2, args.seed)
    H = sched.total
    grid = checkpoint_grid(H)
    ratio = RatioFunctional(phi, psi).running(seq, H)
    prod = ProductFunctional(phi, phi).running(seq, H)
    a1, a2 = 0.1, 0.9
    rows = [[n, repr(float(ratio[n - 1])), repr(float(prod[n - 1]))] for n in grid]
    r = np.array([ratio[n - 1] for n in grid])
    p = np.array([prod[n - 1] for n in grid])
    summary = {"seed": args.seed, "horizon": H, "alpha_nu1": a1, "alpha_nu2": a2,
               "near_nu1": int((np.abs(r - a1) <= 0.05).sum()),
               "near_nu2": int((np.abs(r - a2) <= 0.05).sum()),
               "product_min": float(p.min()), "product_max": float(p.max()),
               "checkpoints": len(grid)}
    files = {"ratio_trace.csv": _rows_csv(["n", "ratio", "product"], rows)}
    return files, summary, (f"{summary['near_nu1']} checkpoints near {a1}, "
                            f"{summary['near_nu2']} near {a2}")


def _case_scenarios(seed: int):
    F2 = full_shift(2)
    yield "fixed-point", SymbolicSeq.periodic(F2, (0,)), ClassifyParams(1 << 14)
    yield "period-2", SymbolicSeq.periodic(F2, (0, 1)), ClassifyParams(1 << 14)
    seg = enumerate_K([bernoulli(0.1), bernoulli(0.9)], 3)
    seq, sched = construct_saturated(F2, seg, True, 4, seed)
    yield "segment-transitive", seq, ClassifyParams(sched.total)
    for level in range(1, 6):
        seq, man = construct_br_level(None, level, seed=seed)
        res = man["resolution"]
        yield f"br-level-{level}", seq, ClassifyParams(res["horizon"], m=res["m"],
                                                       checkpoints=res["checkpoints"])


def _demo_case_table(args, out: Path):
    rows, reports = [], {}
    for name, seq, params in _case_scenarios(args.seed):
        rep = classify(seq, params)
        rows.append([name, params.horizon, int(rep.recurrent), int(rep.qw), int(rep.br), rep.level,
                     rep.level_target or "", rep.case, rep.case_confidence, len(rep.Mx.clusters)])
        reports[name] = json.loads(rep.to_json())
    files = {"cases.csv": _rows_csv(["scenario", "horizon", "recurrent", "qw", "br", "level",
                                     "level_target", "case", "confidence", "clusters"], rows),
             "reports.json": _dump(reports)}
    return files, {"seed": args.seed, "scenarios": [r[0] for r in rows]}, f"{len(rows)} scenarios"


DEMOS = {
    "thmB-irregular": _demo_irregular,
    "thmC-levelset": _demo_level_set,
    "case-table-5.3": _demo_case_table,
    "lemma21-check": _demo_orbit_bound,
}


def cmd_demo(args) -> int:
    if args.name not in DEMOS:
        raise UsageError(f"unknown demo {args.name!r}; available: {', '.join(DEMOS)}")
    out = Path(args.out) if args.out else Path("demo-" + args.name)
    if out.is_dir() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} is not empty (use --force)")
    files, summary, line = DEMOS[args.name](args, out)
    _prepare_out(out, [], args.force)
    for name, data in files.items():
        _write(out, name, data)
    _write(out, "summary.json", _dump(dict(summary, demo=args.name)))
    print(f"{args.name}: {line} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saturon", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"saturon {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a staged point and write its certificate")
    c.add_argument("--k", action="append", default=[], metavar="MEASURE",
                   help="vertex of K, e.g. bernoulli:0.7 (repeat for a polygon)")
    c.add_argument("--cycles", type=int, default=3, help="refinement cycles of the target walk")
    c.add_argument("--stages", type=int, default=5)
    c.add_argument("--transitive", action="store_true")
    c.add_argument("--level", type=int, choices=range(1, 6), help="build a BR-level point instead")
    c.add_argument("--space", help="full:K, golden, sft:ROWS or JSON (default: full shift)")
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--packed", action="store_true", help="write packed binary instead of text")
    c.add_argument("--out", default="out")
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_construct)

    k = sub.add_parser("classify", help="classify an exported sequence")
    k.add_argument("file")
    k.add_argument("--manifest", help="manifest.json from construct --level (sets m and checkpoints)")
    k.add_argument("--space")
    k.add_argument("--m", type=int)
    k.add_argument("--J", type=int, default=7)
    k.add_argument("--horizon", type=int)
    k.add_argument("--reference", action="append", default=[], metavar="MEASURE",
                   help="declared ergodic reference for the QR_erg flag")
    k.add_argument("--table", action="store_true", help="also print a fixed-width table to stderr")
    k.add_argument("--out")
    k.add_argument("--force", action="store_true")
    k.set_defaults(func=cmd_classify)

    d = sub.add_parser("demo", help="run a scripted scenario into a directory")
    d.add_argument("name", help=", ".join(DEMOS))
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--a", type=float, default=0.6, help="target level for thmC-levelset")
    d.add_argument("--out")
    d.add_argument("--force", action="store_true")
    d.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"saturon: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PRECONDITION_ERRORS as exc:
        print(f"saturon: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"saturon: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
