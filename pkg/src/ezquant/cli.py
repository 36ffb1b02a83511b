"""Command-line entry point: ``ezquant <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .bench import DEFAULT_RATIOS, dequant_bench, format_bench
from .gradcheck import run_gradcheck
from .io import QuantFileError, load_manifest, read_quantized
from .model import (
    InvariantError,
    QuantizedModel,
    TensorResult,
    dequantize_model,
    load_quantized_model,
    model_report,
    quantize_model,
    sweep,
)
from .pipeline import MODES
from .types import QuantConfig

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66
EXIT_SOFTWARE = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _select(text: str) -> tuple[str, int]:
    if text == "best":
        return "best_error", 0
    if text.startswith("step:"):
        try:
            return "fixed_step", int(text[5:])
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"--select expects 'best' or 'step:N', got {text!r}")


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("EZQUANT_WORKERS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ezquant", description="Data-free weight-only quantization toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="quantize every matrix in a manifest")
    q.add_argument("--manifest", required=True, type=Path)
    q.add_argument("--out", required=True, type=Path)
    q.add_argument("--bits", type=int, default=4)
    q.add_argument("--sigma", type=float, default=3.0)
    q.add_argument("--lr", type=float, default=1e-3)
    q.add_argument("--steps", type=int, default=200)
    q.add_argument("--select", type=_select, default=("best_error", 0))
    q.add_argument("--workers", type=int, default=_default_workers())
    q.add_argument("--mode", choices=MODES, default="easyquant")
    q.add_argument("--exclude", action="append", default=[], metavar="GLOB",
                   help="tensor-name glob to pass through unquantized (repeatable)")
    q.add_argument("--json", action="store_true", help="print the report as JSON")

    d = sub.add_parser("dequantize", help="reconstruct f32 tensors and a manifest")
    d.add_argument("--in", dest="inp", required=True, type=Path)
    d.add_argument("--out", required=True, type=Path)

    i = sub.add_parser("inspect", help="report outliers and errors of a quantized model")
    i.add_argument("--in", dest="inp", required=True, type=Path)
    i.add_argument("--json", action="store_true")
    i.add_argument("--group", action="append", default=[], metavar="LABEL=GLOB")

    g = sub.add_parser("gradcheck", help="finite-difference check of the range gradient")
    g.add_argument("--trials", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="dequantization vs outlier-scatter timing")
    b.add_argument("--rows", type=int, default=2048)
    b.add_argument("--cols", type=int, default=4096)
    b.add_argument("--ratios", type=_float_list, default=list(DEFAULT_RATIOS))
    b.add_argument("--reps", type=int, default=15)
    b.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", help="outlier fraction and error per sigma threshold")
    s.add_argument("--manifest", required=True, type=Path)
    s.add_argument("--sigma-list", type=_float_list, default=[1.0, 2.0, 4.0, 6.0])
    s.add_argument("--bits", type=int, default=4)
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--no-optimize", action="store_true")
    s.add_argument("--json", action="store_true")
    return p


def _config(args) -> QuantConfig:
    select, step = args.select
    try:
        return QuantConfig(
            bits=args.bits, sigma_n=args.sigma, lr=args.lr, steps=args.steps,
            select=select, select_step=step if select == "fixed_step" else 0,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _print_report(qm: QuantizedModel, as_json: bool, patterns=None):
    rep = model_report(qm, patterns=patterns)
    if as_json:
        print(json.dumps(_jsonable(rep.to_json()), indent=2))
    else:
        print(rep.format_table())


def _jsonable(obj):
    # NaN/inf are not JSON; unknown numbers become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_quantize(args) -> int:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    qm = quantize_model(manifest, cfg, args.out, workers=args.workers, mode=args.mode,
                        exclude=tuple(args.exclude))
    _print_report(qm, args.json)
    for f in qm.failures:
        print(f"failed: {f.name}: {f.message}", file=sys.stderr)
    return EXIT_OK if qm.ok else EXIT_PARTIAL


def cmd_dequantize(args) -> int:
    qm = load_quantized_model(args.inp)
    m = dequantize_model(qm, args.out)
    print(f"wrote {len(m.tensors)} tensors to {args.out}")
    return EXIT_OK


def _single_file_model(path: Path) -> QuantizedModel:
    q = read_quantized(path)
    r = TensorResult(path.stem, q.rows, q.cols, path.name, outliers=len(q.outliers),
                     rtn_error=float("nan"), final_error=float("nan"))
    return QuantizedModel([r], q.bits, "unknown", root=path.parent)


def cmd_inspect(args) -> int:
    patterns = {}
    for g in args.group:
        label, sep, pat = g.partition("=")
        if not sep:
            raise UsageError(f"--group expects LABEL=GLOB, got {g!r}")
        patterns[label] = pat
    qm = _single_file_model(args.inp) if args.inp.is_file() else load_quantized_model(args.inp)
    _print_report(qm, args.json, patterns or None)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    res = run_gradcheck(args.trials, args.seed)
    print(f"trials {res.trials}  passed {res.passed}  worst rel err {res.worst:.3e}  {res.seconds:.2f}s")
    for f in res.failures[:10]:
        print(f"  trial {f[0]}: n={f[1]} s={f[2]:.6g} analytic={f[3]:.6g} fd={f[4]:.6g} rel={f[5]:.3e}")
    return EXIT_OK if res.passed == res.trials else 1


def cmd_bench(args) -> int:
    rows = dequant_bench(args.rows, args.cols, args.ratios, args.reps, args.seed)
    print(format_bench(rows))
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = QuantConfig(bits=args.bits, steps=args.steps, lr=args.lr)
    except ValueError as e:
        raise UsageError(str(e)) from e
    manifest = load_manifest(args.manifest)
    rows = sweep(manifest, args.sigma_list, cfg, optimize=not args.no_optimize)
    if args.json:
        doc = [
            {"sigma_n": r.sigma_n, "elements": r.elements, "outliers": r.outliers,
             "outlier_fraction": r.fraction, "rtn_error": r.rtn_error, "final_error": r.final_error}
            for r in rows
        ]
        print(json.dumps(doc, indent=2))
    else:
        print(f"{'n':>6} {'outliers':>10} {'frac %':>9} {'rtn err':>12} {'final err':>12}")
        for r in rows:
            print(f"{r.sigma_n:>6g} {r.outliers:>10d} {100 * r.fraction:>9.4f} "
                  f"{r.rtn_error:>12.5g} {r.final_error:>12.5g}")
    return EXIT_OK


COMMANDS = {
    "quantize": cmd_quantize,
    "dequantize": cmd_dequantize,
    "inspect": cmd_inspect,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"ezquant: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except QuantFileError as e:
        print(f"ezquant: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except InvariantError as e:
        print(f"ezquant: internal invariant violated: {e}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
