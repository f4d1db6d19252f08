"""Command-line entry point.

Exit codes: 0 success/valid, 1 checked and rejected, 2 malformed input,
3 scale cap exceeded.  Every command prints a JSON run report on stdout.
The default tolerance can be overridden with ``ICOPROC_TOL``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import io as fmt
from .channels import (
    InvalidChannelError,
    QuantumChannel,
    parity_erasure_classical,
    parity_erasure_quantum,
    parity_erasure_quantum_direct,
)
from .decomposition import (
    DecompositionError,
    ParityErasureViolation,
    apply_supermap,
    outcome_probabilities,
    pair_probabilities,
)
from .explorer import (
    ScaleCapError,
    causal_separability_lp,
    channel_rows,
    deterministic_parity_erasure_census,
    parity_polytope_vertices,
)
from .process_matrix import format_subset, pair, validate
from .tensor_core import DEFAULT_TOL

EXIT_OK, EXIT_REJECTED, EXIT_MALFORMED, EXIT_CAP = 0, 1, 2, 3
TOL_ENV = "ICOPROC_TOL"


def default_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return DEFAULT_TOL
    try:
        return float(raw)
    except ValueError:
        raise SystemExit(f"{TOL_ENV} must be a number, got {raw!r}")


def _emit(report: dict, args, started: float) -> None:
    report["wall_time"] = time.perf_counter() - started
    text = json.dumps(report, indent=1, sort_keys=True)
    if getattr(args, "report", None):
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _base(command: str, paths, tol: float) -> dict:
    return {"command": command,
            "inputs": {str(p): fmt.file_digest(p) for p in paths},
            "tolerances": {"tol": tol}}


def cmd_validate(args) -> tuple[int, dict]:
    report = {"command": "validate", "inputs": {}, "tolerances": {"tol": args.tol}}
    try:
        report = _base("validate", [args.path], args.tol)
        W = fmt.read_operator(args.path)
    except (fmt.FormatError, OSError) as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    if not W.is_hermitian(args.tol):
        report.update(verdict=False, error=f"not Hermitian (error {W.hermiticity_error():.3e})")
        return EXIT_REJECTED, report
    try:
        res = validate(W, args.tol)
    except ValueError as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    d = res.to_dict()
    report["residuals"] = {"PM1_min_eigenvalue": d["psd_margin"], "PM2_trace_error": d["trace_error"],
                           "PM3": d["subset_residuals"]}
    report["violated"] = d["violated"]
    report["verdict"] = res.verdict
    return (EXIT_OK if res.verdict else EXIT_REJECTED), report


def cmd_parity(args) -> tuple[int, dict]:
    report = {"command": "parity", "inputs": {}, "tolerances": {"tol": args.tol}}
    try:
        report = _base("parity", [args.path], args.tol)
        if args.classical:
            ch = fmt.read_classical(args.path, args.tol)
        else:
            ch = QuantumChannel(fmt.read_operator(args.path)).check(args.tol)
    except (fmt.FormatError, InvalidChannelError, ValueError, OSError) as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    if args.classical:
        rep = parity_erasure_classical(ch, args.tol)
        report["residuals"] = {"classical": rep.to_dict()}
        verdict = rep.verdict
    else:
        reps = {}
        if args.method in ("choi", "both"):
            reps["choi"] = parity_erasure_quantum(ch, args.tol)
        if args.method in ("direct", "both"):
            reps["direct"] = parity_erasure_quantum_direct(ch, args.tol)
        report["residuals"] = {k: r.to_dict() for k, r in reps.items()}
        verdicts = {r.verdict for r in reps.values()}
        if len(reps) > 1:
            report["methods_agree"] = len(verdicts) == 1
        verdict = all(verdicts)
    report["verdict"] = verdict
    return (EXIT_OK if verdict else EXIT_REJECTED), report


def cmd_apply(args) -> tuple[int, dict]:
    report = {"command": "apply", "inputs": {}, "tolerances": {"tol": args.tol}}
    try:
        report = _base("apply", [args.process] + list(args.ops), args.tol)
        W = fmt.read_operator(args.process)
        ops = [fmt.read_local_operation(p) for p in args.ops]
        order = [int(v) for v in args.order.split(",")] if args.order else None
    except (fmt.FormatError, ValueError, OSError) as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    try:
        if all(len(o) == 1 for o in ops):
            value = apply_supermap(W, [o[0] for o in ops], order, args.tol)
            reference = pair(W, [o[0] for o in ops])
            if isinstance(value, float):
                report["result"] = value
                report["discrepancy"] = abs(value - reference)
            else:
                report["result"] = fmt.operator_to_dict(value)
                report["discrepancy"] = value.distance(reference, "op")
        else:
            probs = outcome_probabilities(W, ops, order, args.tol)
            reference = pair_probabilities(W, ops)
            report["result"] = probs.tolist()
            report["total_probability"] = float(probs.sum())
            report["discrepancy"] = float(np.max(np.abs(probs - reference)))
    except ParityErasureViolation as exc:
        report["error"] = str(exc)
        report["violated"] = [format_subset(s) for s in exc.subsets]
        return EXIT_REJECTED, report
    except (InvalidChannelError, DecompositionError) as exc:
        report["error"] = str(exc)
        return EXIT_REJECTED, report
    except (ValueError, KeyError) as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    report["verdict"] = report["discrepancy"] <= max(args.tol, 1e-8)
    return (EXIT_OK if report["verdict"] else EXIT_REJECTED), report


def _sizes(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def cmd_explore(args) -> tuple[int, dict]:
    paths = [args.lp] if args.lp else []
    report = {"command": "explore", "inputs": {}, "tolerances": {"tol": args.tol}}
    try:
        report = _base("explore", paths, args.tol)
        sig = (_sizes(args.out_sizes), _sizes(args.in_sizes))
        if args.lp:
            ch = fmt.read_classical(args.lp, args.tol)
            cert = causal_separability_lp(ch)
            report["certificate"] = cert.to_dict()
            report["verdict"] = cert.feasible
            return (EXIT_OK if cert.feasible else EXIT_REJECTED), report
        if args.two_bit_census:
            channels = [d.to_channel() for d in deterministic_parity_erasure_census(sig, args.tol)]
        else:
            channels = parity_polytope_vertices(sig, args.tol)
    except ScaleCapError as exc:
        report["error"] = str(exc)
        return EXIT_CAP, report
    except (fmt.FormatError, ValueError, OSError) as exc:
        report["error"] = str(exc)
        return EXIT_MALFORMED, report
    header, rows = channel_rows(channels)
    report["count"] = len(rows)
    report["codes"] = sorted(r[1] for r in rows if r[1] != "")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fmt.write_csv(header, rows, fh)
        report["csv"] = args.csv
    report["verdict"] = True
    return EXIT_OK, report


def cmd_make_fixtures(args) -> tuple[int, dict]:
    from .fixtures import write_fixtures
    written = write_fixtures(args.directory) if args.directory else write_fixtures()
    return EXIT_OK, {"command": "make-fixtures", "written": sorted(str(p) for p in written)}


def build_parser() -> argparse.ArgumentParser:
    tol = default_tol()
    parser = argparse.ArgumentParser(prog="icoproc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--tol", type=float, default=tol, help=f"numerical tolerance (default {tol:g})")
        p.add_argument("--report", help="also write the JSON run report to this path")

    p = sub.add_parser("validate", help="check the process-matrix conditions")
    p.add_argument("path")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("parity", help="check the parity-erasure property of a channel")
    p.add_argument("path")
    kind = p.add_mutually_exclusive_group()
    kind.add_argument("--classical", action="store_true")
    kind.add_argument("--quantum", action="store_true")
    p.add_argument("--method", choices=("choi", "direct", "both"), default="both")
    common(p)
    p.set_defaults(func=cmd_parity)

    p = sub.add_parser("apply", help="insert local operations into a process")
    p.add_argument("process")
    p.add_argument("ops", nargs="+", help="one channel or instrument file per party")
    p.add_argument("--order", help="comma-separated insertion order, default descending")
    common(p)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("explore", help="classical bit-scale exploration")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--two-bit-census", action="store_true")
    mode.add_argument("--vertices", action="store_true")
    mode.add_argument("--lp", metavar="PATH")
    p.add_argument("--out-sizes", default="2,2")
    p.add_argument("--in-sizes", default="2,2")
    p.add_argument("--csv", help="write the channel list as CSV")
    common(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("make-fixtures", help="regenerate the golden fixture files")
    p.add_argument("directory", nargs="?")
    p.set_defaults(func=cmd_make_fixtures, report=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    code, report = args.func(args)
    _emit(report, args, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
