"""Command-line entry points.

Subcommands: generate, decompose, compare, bench, report.  Structured
output goes to stdout as JSON when --json is set, otherwise as text
tables.  Exit codes: 0 success, 2 usage error, 3 data error.
"""

import argparse
import hashlib
import json
import sys

from .bench import run_bench, run_compare
from .decompose import DEFAULT_RANKS, DecomposeConfig
from .errors import BdnnError
from .inference import decompose_model, decomposition_residuals
from .io import load_model, save_model
from .model import NetworkModel, validate_model
from .reports import opcount_report, size_report
from .zoo import ARCHITECTURES, generate_synthetic, random_decomposed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


def _emit(args, payload, text_fn):
    if args.json:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(text_fn() + "\n")


def _qbits_list(raw):
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad qbits list {raw!r}")
    if not values or any(q < 1 for q in values):
        raise argparse.ArgumentTypeError(f"bad qbits list {raw!r}")
    return values


def _load_model_or_arch(path_or_name):
    if path_or_name in ARCHITECTURES:
        return ARCHITECTURES[path_or_name]()
    return load_model(path_or_name)


def cmd_generate(args):
    base = ARCHITECTURES[args.arch]()
    if args.decomposed:
        model = random_decomposed(base, rank=args.rank, seed=args.seed)
    else:
        model = generate_synthetic(base, seed=args.seed, mode=args.mode,
                                   rank=args.rank if args.mode == "exact"
                                   else None)
        validate_model(model)
    digest = save_model(model, args.output)
    _emit(args, {"schema": "bdnn.generate/1", "arch": args.arch,
                 "output": args.output, "sha256": digest},
          lambda: f"wrote {args.arch} model to {args.output}")
    return EXIT_OK


def cmd_decompose(args):
    model = load_model(args.input)
    if not isinstance(model, NetworkModel):
        raise BdnnError(f"{args.input}: expected a dense model container")
    validate_model(model)
    cfg = DecomposeConfig(k=args.rank, L=args.restarts,
                          max_iters=args.max_iters, rel_tol=args.tol,
                          seed=args.seed)
    keep = set()
    if args.keep_exact_first:
        from .bench import first_decomposable_index
        idx = first_decomposable_index(model)
        if idx is not None:
            keep.add(idx)
    decomposed = decompose_model(model, cfg, keep_exact=keep,
                                 threads=args.threads)
    with open(args.input, "rb") as fh:
        decomposed.source_hash = hashlib.sha256(fh.read()).hexdigest()
    save_model(decomposed, args.output)
    stats = decomposition_residuals(model, decomposed)
    payload = {"schema": "bdnn.decompose/1", "input": args.input,
               "output": args.output, "rank": args.rank, "layers": stats}

    def text():
        lines = [f"decomposed {args.input} at rank {args.rank} -> {args.output}"]
        for rec in stats:
            if rec.get("kept_exact"):
                lines.append(f"  layer {rec['layer']} ({rec['kind']}): kept exact")
            else:
                lines.append(
                    f"  layer {rec['layer']} ({rec['kind']}): mean cost "
                    f"{rec['mean_cost']:.4e}, max {rec['max_cost']:.4e}, "
                    f"mean rel residual {rec['mean_rel_residual']:.4f}"
                )
        return "\n".join(lines)

    _emit(args, payload, text)
    return EXIT_OK


def cmd_compare(args):
    model = load_model(args.model)
    if not isinstance(model, NetworkModel):
        raise BdnnError(f"{args.model}: expected a dense model container")
    decomposed = [load_model(p) for p in args.decomposed]
    report = run_compare(model, decomposed, args.qbits, args.inputs,
                         seed=args.seed,
                         keep_exact_first=args.keep_exact_first,
                         threads=args.threads)

    def text():
        lines = [f"compare on {model.name}: {args.inputs} inputs"]
        for cell in report["cells"]:
            lines.append(
                f"  k={cell['rank']} Q={cell['qbits']}: "
                f"mean rel L2 {cell['mean_rel_l2']}, "
                f"top-1 agreement {cell['top1_agreement']}"
            )
        return "\n".join(lines)

    _emit(args, report, text)
    return EXIT_OK


def cmd_bench(args):
    decomposed = load_model(args.model)
    if isinstance(decomposed, NetworkModel):
        raise BdnnError(f"{args.model}: expected a decomposed model container")
    result = run_bench(decomposed, args.qbits, runs=args.runs,
                       seed=args.seed, threads=args.threads)
    _emit(args, result.to_json(), result.format_table)
    return EXIT_OK


def cmd_report(args):
    model = _load_model_or_arch(args.model)
    sizes = size_report(model, args.rank)
    ops = opcount_report(model, args.rank, args.qbits)
    payload = {"schema": "bdnn.report/1", "model": model.name,
               "size": sizes.to_json(), "opcount": ops.to_json()}
    _emit(args, payload,
          lambda: sizes.format_table() + "\n\n" + ops.format_table())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bdnn",
        description="Binary-decomposed CNN inference and compression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic model container")
    p.add_argument("output")
    p.add_argument("--arch", choices=sorted(ARCHITECTURES), default="toy-conv")
    p.add_argument("--mode", choices=("gaussian", "exact"), default="gaussian")
    p.add_argument("--rank", type=int, default=None,
                   help="rank for exact mode or --decomposed")
    p.add_argument("--decomposed", action="store_true",
                   help="emit a random decomposed container (for bench)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decompose", help="decompose a dense model container")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--keep-exact-first", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("compare", help="exact vs approximate error sweep")
    p.add_argument("model")
    p.add_argument("decomposed", nargs="+")
    p.add_argument("--qbits", type=_qbits_list, default=[4, 6, 8])
    p.add_argument("--inputs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-exact-first", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="time the binary path vs the scalar "
                                     "float reference")
    p.add_argument("model", help="decomposed model container")
    p.add_argument("--qbits", type=_qbits_list, default=[6])
    p.add_argument("--runs", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="size and op-count accounting tables")
    p.add_argument("model",
                   help="container path or bundled shape name "
                        f"({', '.join(sorted(ARCHITECTURES))})")
    p.add_argument("--rank", type=int, default=6)
    p.add_argument("--qbits", type=int, default=6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def _validate_usage(parser, args):
    if args.command in ("decompose", "report") and args.rank is not None \
            and args.rank < 1:
        parser.error("--rank must be >= 1")
    if args.command == "generate":
        if args.decomposed and (args.rank is None or args.rank < 1):
            parser.error("--decomposed requires --rank >= 1")
        if args.mode == "exact" and (args.rank is None or args.rank < 1):
            parser.error("--mode exact requires --rank >= 1")
        if args.rank is not None and args.rank < 1:
            parser.error("--rank must be >= 1")
    if args.command == "bench" and args.runs < 5:
        parser.error("--runs must be >= 5")
    if args.command == "compare" and args.inputs < 0:
        parser.error("--inputs must be >= 0")
    if args.command == "report" and args.qbits < 1:
        parser.error("--qbits must be >= 1")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_usage(parser, args)
    try:
        return args.func(args)
    except BdnnError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
