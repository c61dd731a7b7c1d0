"""Command-line entry point: ``opsplit {constants,run,compare,batch}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import constants as C
from .bench import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_TARGET_MISS,
    EXIT_VALIDATION,
    SpecError,
    compare_relaxation,
    parse_spec,
    resolve_spec_path,
    run_spec,
    shipped_specs,
)
from .exceptions import NumericalFailure, RangeViolation

log = logging.getLogger("opsplit")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from exc


def _emit(obj, stream=None):
    (stream or sys.stdout).write(json.dumps(obj) + "\n")


def cmd_constants(args):
    if args.what == "compose":
        if not args.alphas:
            raise RangeViolation("need at least one constant", bound="alphas")
        out = {"phi": float(C.compose_many_closed(args.alphas))}
        if len(args.alphas) >= 2:
            out["phi_recursive"] = float(C.compose_many_recursive(args.alphas))
            out["phi_symmetric"] = float(C.compose_many_symmetric(args.alphas))
    elif args.what == "compare":
        if not args.alphas:
            raise RangeViolation("need at least one constant", bound="alphas")
        out = {"phi": float(C.compose_many_closed(args.alphas)),
               "phi_tilde": float(C.phi_tilde(args.alphas))}
        if len(args.alphas) == 2:
            out["phi_hat"] = float(C.phi_hat(*args.alphas))
    else:
        p = C.fb_parameters(args.beta, args.gamma, args.eps)
        out = {"phi": float(p.phi), "lambda_sup": p.lambda_sup}
    _emit(out)
    return EXIT_OK


def _run_one(path, trace_dir=None):
    """Returns ``(exit_code, payload)``; never raises for expected failures."""
    try:
        spec = parse_spec(resolve_spec_path(path))
    except SpecError as exc:
        return EXIT_VALIDATION, exc.to_dict()
    except (OSError, json.JSONDecodeError) as exc:
        return EXIT_VALIDATION, {"error": "validation", "message": str(exc)}
    try:
        report, _ = run_spec(spec, trace_dir)
    except RangeViolation as exc:
        return EXIT_VALIDATION, exc.to_dict()
    except (NumericalFailure, FloatingPointError, ArithmeticError) as exc:
        return EXIT_NUMERICAL, {"error": "numerical", "message": str(exc)}
    code = EXIT_OK if report.expectations_met else EXIT_TARGET_MISS
    return code, {"summary": report.summary(), "report": report.to_dict()}


def cmd_run(args):
    code, payload = _run_one(args.spec, args.trace_dir)
    if "summary" in payload:
        print(payload["summary"])
        if args.json:
            _emit(payload["report"])
    else:
        _emit(payload, sys.stderr)
    return code


def cmd_compare(args):
    try:
        spec = parse_spec(resolve_spec_path(args.spec))
        out = compare_relaxation(spec, args.target)
    except SpecError as exc:
        _emit(exc.to_dict(), sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        _emit({"error": "numerical", "message": str(exc)}, sys.stderr)
        return EXIT_NUMERICAL
    _emit(out)
    return EXIT_OK


def cmd_batch(args):
    paths = sorted(Path(args.directory).glob("*.json"))
    if not paths:
        log.warning("no spec files in %s", args.directory)
        return EXIT_OK
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, map(str, paths), [args.trace_dir] * len(paths)))
    else:
        results = [_run_one(str(p), args.trace_dir) for p in paths]
    worst = EXIT_OK
    for p, (code, payload) in zip(paths, results):
        print(payload.get("summary") or f"[error {code}] {p.name}: {payload.get('message')}")
        worst = max(worst, code)
    return worst


def build_parser():
    ap = argparse.ArgumentParser(prog="opsplit", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("constants", help="averagedness constants and relaxation bounds")
    csub = pc.add_subparsers(dest="what", required=True)
    for name in ("compose", "compare"):
        p = csub.add_parser(name)
        p.add_argument("--alphas", type=_floats, required=True)
    p = csub.add_parser("fb")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    pc.set_defaults(func=cmd_constants)

    shipped = ", ".join(sorted(shipped_specs()))
    pr = sub.add_parser("run", help=f"run one spec file (or a shipped spec: {shipped})")
    pr.add_argument("spec")
    pr.add_argument("--trace-dir")
    pr.add_argument("--json", action="store_true", help="also print the full report as JSON")
    pr.set_defaults(func=cmd_run)

    pm = sub.add_parser("compare", help="classical vs extended relaxation iteration counts")
    pm.add_argument("spec")
    pm.add_argument("--target", type=float, help="common residual target (default: spec tolerance or 1e-8)")
    pm.set_defaults(func=cmd_compare)

    pb = sub.add_parser("batch", help="run every *.json spec in a directory")
    pb.add_argument("directory")
    pb.add_argument("--jobs", type=int, default=1)
    pb.add_argument("--trace-dir")
    pb.set_defaults(func=cmd_batch)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RangeViolation as exc:
        _emit(exc.to_dict(), sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
