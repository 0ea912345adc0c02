"""Command-line front end: generate, solve, enumerate, profile."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .arrangement import DegenerateArrangementError, enumerate_regions, preprocess
from .core import (ContractViolation, ProblemInstance, SolverConfig, UnsupportedSizeError,
                   generate_instance, read_matrix_csv, write_matrix_csv, write_pair_json)
from .gop import CONVERGED, SolveState, profile_one_iteration, run

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_LIMIT = 3

PROFILE_COLUMNS = ("M", "N", "Primal", "Pre", "URI", "Num", "Dual", "Total")

_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
_FILE_KEYS = _SOLVER_KEYS | {"input", "out", "K", "P"}

# flag dest -> config file key
_FLAG_KEYS = {
    "input": "input", "out": "out", "k": "K", "sparsity": "P", "epsilon": "epsilon",
    "seed": "seed", "threads": "workers", "max_iters": "max_iterations",
    "max_seconds": "max_wall_seconds",
}


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("config file must hold a JSON object")
    unknown = sorted(set(doc) - _FILE_KEYS)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def merge_solve_settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by any flag given on the command line."""
    settings = load_config_file(args.config) if args.config else {}
    for dest, key in _FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is not None:
            settings[key] = val
    for key in ("input", "K", "P"):
        if key not in settings:
            raise InputError(f"missing required setting '{key}'")
    return settings


def _status_line(state: SolveState) -> None:
    print(f"T={state.iterations} PUBD={state.pubd:.6g} RLBD={state.rlbd:.6g} "
          f"gap={state.gap:.6g} open={len(state.candidates)}", file=sys.stderr, flush=True)


def cmd_generate(args: argparse.Namespace) -> int:
    instance, truth = generate_instance(args.m, args.n, seed=args.seed)
    try:
        write_matrix_csv(args.out_y, instance.y)
        if args.out_truth:
            write_pair_json(args.out_truth, truth)
    except OSError as exc:
        raise InputError(str(exc)) from None
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    settings = merge_solve_settings(args)
    y = read_matrix_csv(settings["input"])
    solver_kw = {k: v for k, v in settings.items() if k in _SOLVER_KEYS}
    config = SolverConfig(**solver_kw)
    instance = ProblemInstance(y=y, K=int(settings["K"]), P=float(settings["P"]),
                               epsilon=config.epsilon, seed=config.seed)
    report = run(instance, config, on_iteration=_status_line)
    text = json.dumps(report.to_json(), sort_keys=True)
    out = settings.get("out")
    if out:
        try:
            Path(out).write_text(text + "\n", encoding="utf-8")
        except OSError as exc:
            raise InputError(str(exc)) from None
    else:
        print(text)
    print(f"status={report.status} PUBD={report.pubd:.6g} RLBD={report.rlbd:.6g} "
          f"iterations={report.iterations}", file=sys.stderr)
    return EXIT_OK if report.status == CONVERGED else EXIT_LIMIT


def cmd_enumerate(args: argparse.Namespace) -> int:
    H = read_matrix_csv(args.hyperplanes)
    if H.shape[1] < 2:
        raise InputError("hyperplane rows need at least one coefficient and an offset")
    arr = preprocess(H)
    regions = enumerate_regions(arr, P=args.box, seed=args.seed)
    for bits in regions:
        print("".join(str(b) for b in bits))
    print(f"count: {len(regions)}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("list must be nonempty")
    return vals


def cmd_profile(args: argparse.Namespace) -> int:
    rows = []
    for M in args.m_list:
        for N in args.n_list:
            instance, _ = generate_instance(M, N, seed=args.seed)
            prof = profile_one_iteration(instance, SolverConfig(seed=args.seed))
            rows.append({"M": M, "N": N, **prof})
            print(f"M={M} N={N} Num={prof['Num']} Total={prof['Total']:.3f}s", file=sys.stderr)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=PROFILE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gopmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic instance")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-y", required=True)
    p.add_argument("--out-truth")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run the branch-and-bound solver on a y CSV")
    p.add_argument("--config", help="JSON file with solver settings; flags override it")
    p.add_argument("--input")
    p.add_argument("--k", type=int)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("enumerate", help="list the regions of a hyperplane arrangement")
    p.add_argument("--hyperplanes", required=True, help="CSV rows (a..., b)")
    p.add_argument("--box", type=float, default=1.0, help="half-width of the bounding box")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("profile", help="time one iteration on synthetic instances")
    p.add_argument("--m-list", type=_int_list, required=True)
    p.add_argument("--n-list", type=_int_list, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ContractViolation, UnsupportedSizeError, DegenerateArrangementError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
