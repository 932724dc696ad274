"""Command-line entry point.

Exit codes: 0 success, 1 validation or check failure, 2 numerical-guard abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from pydantic import ValidationError

from . import runs
from .artifacts import CorruptArtifact, MissingRunMeta
from .config import (
    AbelianConfig,
    DecomposeCheckConfig,
    DecoupleConfig,
    HermiteCheckConfig,
    MaxEntConfig,
    load_config,
)

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; here 2 means a guard abort."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpflow", description="Monomial-potential experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("decompose-check", help="direct loss vs its monomial-potential decomposition")
    s.add_argument("--config")
    s.add_argument("--n", type=int)
    s.add_argument("--q", type=int)
    s.add_argument("--seeds", type=int)
    s.add_argument("--seed0", type=int)
    s.add_argument("--out", default="runs/decompose-check")

    for name, hlp in (("train-abelian", "particle flow on the Abelian task"), ("decouple", "particle flow for a Hermite family")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)

    s = sub.add_parser("spectrum", help="reduced eigenvalues over a recorded trajectory")
    s.add_argument("traj", help="trajectory directory written by decouple or train-abelian")
    s.add_argument("--out")

    s = sub.add_parser("compose", help="0/1-set composition report for two measures")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--family", required=True)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out", default="runs/compose")

    s = sub.add_parser("maxent", help="exponential-family density matching monomial potentials")
    s.add_argument("--config")
    s.add_argument("--monomials", help="JSON list of 0-based variable index lists")
    s.add_argument("--targets", type=_floats)
    s.add_argument("--box", type=float)
    s.add_argument("--dim", type=int)
    s.add_argument("--nodes", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--out", default="runs/maxent")

    s = sub.add_parser("hermite-check", help="Hermite recurrence, orthogonality and parity suite")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--out", default="runs/hermite-check")

    s = sub.add_parser("accept", help="run the acceptance suite")
    s.add_argument("--only", type=lambda t: [int(x) for x in t.split(",")], help="comma-separated criterion numbers")
    s.add_argument("--out", help="directory for acceptance.json")

    s = sub.add_parser("plot-data", help="tidy (t, series, value) CSV from a run directory")
    s.add_argument("traj")
    s.add_argument("--out")
    return p


def _monomials_from_file(path):
    from .measure_algebra import load_family

    return [list(m.indices) for m in load_family(path)]


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "decompose-check":
        if args.config is None and (args.n is None or args.q is None):
            raise _UsageError("decompose-check needs --config or both --n and --q")
        cfg = load_config(DecomposeCheckConfig, args.config, {"n": args.n, "q": args.q, "seeds": args.seeds, "seed0": args.seed0})
        s = runs.run_decompose_check(cfg, args.out)
        print(f"decompose-check n={cfg.n} q={cfg.q}: {'PASS' if s['passed'] else 'FAIL'} worst={s['worst_relative_delta']:.3e}")
        return EXIT_OK if s["passed"] else EXIT_INVALID
    if cmd == "train-abelian":
        s = runs.run_train_abelian(load_config(AbelianConfig, args.config, {}), args.out)
        print(f"train-abelian: H {s['H_initial']:.6g} -> {s['H_final']:.6g}, dist01 {s['dist01_final']:.4g}")
        return EXIT_OK
    if cmd == "decouple":
        s = runs.run_decouple(load_config(DecoupleConfig, args.config, {}), args.out)
        print(f"decouple: H {s['H_initial']:.6g} -> {s['H_final']:.6g}, max residual {s.get('decoupling', {}).get('max_residual', float('nan')):.3e}")
        return EXIT_OK
    if cmd == "spectrum":
        doc = runs.run_spectrum(args.traj, args.out)
        print(f"spectrum: {doc['frames']} frames, {len(doc['crossings'])} crossings, {len(doc['ambiguous_frames'])} ambiguous")
        return EXIT_OK
    if cmd == "compose":
        doc = runs.run_compose(args.a, args.b, args.family, args.out, args.tol)
        print(json.dumps({"passed": doc["passed"], "mul": doc["mul"], "add": doc["add"]}))
        return EXIT_OK if doc["passed"] else EXIT_INVALID
    if cmd == "maxent":
        over = {"targets": args.targets, "box": args.box, "dim": args.dim, "nodes": args.nodes, "tol": args.tol, "max_iter": args.max_iter}
        if args.monomials is not None:
            over["monomials"] = _monomials_from_file(args.monomials)
        if args.config is None and (args.monomials is None or args.targets is None or args.box is None or args.dim is None):
            raise _UsageError("maxent needs --config or all of --monomials --targets --box --dim")
        doc = runs.run_maxent(load_config(MaxEntConfig, args.config, over), args.out)
        print(f"maxent: lambda={doc['lambda'].tolist()} iterations={doc['iterations']}")
        return EXIT_OK
    if cmd == "hermite-check":
        cfg = load_config(HermiteCheckConfig, args.config, {"seed": args.seed, "samples": args.samples})
        doc = runs.run_hermite_check(cfg, args.out)
        print(f"hermite-check: {'PASS' if doc['passed'] else 'FAIL'}")
        return EXIT_OK if doc["passed"] else EXIT_INVALID
    if cmd == "accept":
        from .acceptance import run_suite

        results = run_suite(args.only, out=args.out)
        return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID
    if cmd == "plot-data":
        path = runs.emit_plot_data(args.traj, args.out)
        print(f"plot-data: wrote {path}")
        return EXIT_OK
    raise AssertionError(cmd)


class _UsageError(Exception):
    pass


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mpflow: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"mpflow: invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, MissingRunMeta, CorruptArtifact, json.JSONDecodeError, ValueError) as exc:
        print(f"mpflow: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except runs.RunAborted as exc:
        print(f"mpflow: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
