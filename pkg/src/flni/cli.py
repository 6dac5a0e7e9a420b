"""Command-line interface: ``flni fit | path | certify``.

Exit codes: 0 success, 1 certificate rejected, 2 I/O or parse error,
3 signal/graph dimension mismatch, 4 cyclic graph without
``--allow-cyclic``, 5 missing ``--sigma2`` for ``path`` (or a degenerate
estimate).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .estimators import FitResult, fit_flni
from .graph import GraphError, OrderGraph, parse_graph_spec, validate_acyclic
from .model_select import DegenerateEstimateWarning, estimate_sigma2_mad, sweep_path
from .oracle import certify_optimality
from .solver import Algorithm, Penalties, SolverOptions

log = logging.getLogger("flni")

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 1
EXIT_IO = 2
EXIT_DIMENSION = 3
EXIT_CYCLIC = 4
EXIT_SIGMA2 = 5

CERTIFY_THRESHOLD = 1e-5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- serialisation ----------------------------------------------------------

def format_float(x: float) -> str:
    """17 significant digits; always carries a decimal point or exponent."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 0) -> str:
    """Deterministic JSON writer with fixed float formatting."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{inner}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def fit_to_dict(fit: FitResult) -> dict:
    return {
        "beta": fit.beta,
        "nu": fit.dual.nu,
        "objective": fit.objective,
        "df": fit.df,
        "groups": [list(grp) for grp in fit.groups.groups],
        "converged": fit.dual.converged,
        "gap": fit.dual.gap,
    }


# -- input ------------------------------------------------------------------

def read_signal(path: str) -> np.ndarray:
    """One value per line; blank lines are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read input {path}: {exc}", EXIT_IO) from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = float(line)
        except ValueError:
            raise CliError(f"{path}:{lineno}: not a number: {line!r}", EXIT_IO) from None
        if not math.isfinite(v):
            raise CliError(f"{path}:{lineno}: non-finite value", EXIT_IO)
        values.append(v)
    if not values:
        raise CliError(f"{path}: no values", EXIT_IO)
    return np.array(values)


def read_grid(path: str) -> list[Penalties]:
    """Rows ``lambda_f,lambda_l,lambda_ni``; a non-numeric first row is a header."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise CliError(f"cannot read grid {path}: {exc}", EXIT_IO) from exc
    grid = []
    for k, row in enumerate(rows):
        try:
            vals = [float(c) for c in row]
        except ValueError:
            if k == 0:
                continue
            raise CliError(f"{path}: row {k + 1} is not numeric: {row!r}", EXIT_IO) from None
        if len(vals) != 3:
            raise CliError(f"{path}: row {k + 1} needs 3 columns, got {len(vals)}", EXIT_IO)
        try:
            grid.append(Penalties(*vals))
        except ValueError as exc:
            raise CliError(f"{path}: row {k + 1}: {exc}", EXIT_IO) from None
    if not grid:
        raise CliError(f"{path}: penalty grid is empty", EXIT_IO)
    return grid


def load_problem(args) -> tuple[np.ndarray, OrderGraph]:
    try:
        g = parse_graph_spec(args.graph)
    except (GraphError, OSError, json.JSONDecodeError) as exc:
        raise CliError(f"bad graph spec: {exc}", EXIT_IO) from exc
    y = read_signal(args.input)
    if y.shape[0] != g.n_vertices:
        raise CliError(
            f"signal has {y.shape[0]} values but graph has {g.n_vertices} vertices",
            EXIT_DIMENSION,
        )
    if not args.allow_cyclic and not validate_acyclic(g):
        raise CliError("graph has a directed cycle (pass --allow-cyclic to fit anyway)", EXIT_CYCLIC)
    return y, g


def solver_options(args) -> SolverOptions:
    try:
        return SolverOptions(tol=args.tol, max_iter=args.max_iter, algorithm=Algorithm(args.algorithm))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def penalties(args) -> Penalties:
    try:
        return Penalties(args.lambda_f, args.lambda_l, args.lambda_ni)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from None


def write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


# -- commands ---------------------------------------------------------------

def cmd_fit(args) -> int:
    y, g = load_problem(args)
    p = penalties(args)
    fit = fit_flni(y, g, p, solver_options(args))
    if not fit.converged:
        log.warning("solver did not converge: relative gap %.3g", fit.dual.relative_gap)
    out = fit_to_dict(fit)
    if args.certify:
        cert = certify_optimality(y, g, p, fit.beta)
        out["certificate_residual"] = cert.residual
    write_output(dumps(out) + "\n", args.output)
    return EXIT_OK


def cmd_path(args) -> int:
    y, g = load_problem(args)
    grid = read_grid(args.grid)
    if args.sigma2 is not None:
        sigma2 = args.sigma2
    elif args.estimate_sigma2:
        if g.n_edges == 0:
            raise CliError("cannot estimate sigma2 on a graph without edges", EXIT_SIGMA2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateEstimateWarning)
            sigma2 = estimate_sigma2_mad(y, g)
        if sigma2 <= 0:
            raise CliError("sigma2 estimate is degenerate (0); pass --sigma2", EXIT_SIGMA2)
    else:
        raise CliError("path needs --sigma2 or --estimate-sigma2", EXIT_SIGMA2)
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise CliError(f"sigma2 must be positive, got {sigma2!r}", EXIT_IO)
    result = sweep_path(y, g, grid, sigma2, solver_options(args))
    entries = []
    for e in result.entries:
        d = {
            "lambda_f": e.penalties.lambda_f,
            "lambda_l": e.penalties.lambda_l,
            "lambda_ni": e.penalties.lambda_ni,
            "cp": e.cp,
        }
        d.update(fit_to_dict(e.fit))
        entries.append(d)
    out = {"sigma2": result.sigma2, "best_index": result.best_index, "entries": entries}
    write_output(dumps(out) + "\n", args.output)
    return EXIT_OK


def cmd_certify(args) -> int:
    y, g = load_problem(args)
    p = penalties(args)
    if args.beta is not None:
        beta = read_signal(args.beta)
        if beta.shape != y.shape:
            raise CliError("beta and input have different lengths", EXIT_DIMENSION)
    else:
        beta = fit_flni(y, g, p, solver_options(args)).beta
    cert = certify_optimality(y, g, p, beta)
    ok = cert.residual <= args.threshold
    out = {
        "certified": ok,
        "residual": cert.residual,
        "q": cert.q,
        "t": cert.t,
        "s": cert.s,
    }
    write_output(dumps(out) + "\n", args.output)
    return EXIT_OK if ok else EXIT_NOT_CERTIFIED


# -- parser -----------------------------------------------------------------

def _nonneg(text: str) -> float:
    v = float(text)
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flni",
        description="Fused lasso nearly-isotonic signal approximation on order graphs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, help="signal CSV, one value per line")
    common.add_argument("--graph", required=True,
                        help="chain:<n>, grid:<n1>x<n2> or edges:<path.json>")
    common.add_argument("--tol", type=float, default=1e-8, help="relative duality gap target")
    common.add_argument("--max-iter", type=int, default=50000)
    common.add_argument("--algorithm", default=Algorithm.APG.value,
                        choices=[a.value for a in Algorithm])
    common.add_argument("--output", help="output path (default: stdout)")
    common.add_argument("--allow-cyclic", action="store_true",
                        help="accept graphs with directed cycles")

    lam = argparse.ArgumentParser(add_help=False)
    lam.add_argument("--lambda-f", type=_nonneg, default=0.0)
    lam.add_argument("--lambda-l", type=_nonneg, default=0.0)
    lam.add_argument("--lambda-ni", type=_nonneg, default=0.0)

    p_fit = sub.add_parser("fit", parents=[common, lam], help="fit one penalty triple")
    p_fit.add_argument("--certify", action="store_true",
                       help="add the subgradient certificate residual to the output")
    p_fit.set_defaults(func=cmd_fit)

    p_path = sub.add_parser("path", parents=[common], help="sweep a penalty grid, select by Cp")
    p_path.add_argument("--grid", required=True, help="CSV rows lambda_f,lambda_l,lambda_ni")
    p_path.add_argument("--sigma2", type=float)
    p_path.add_argument("--estimate-sigma2", action="store_true",
                        help="use the MAD-of-differences heuristic when --sigma2 is absent")
    p_path.set_defaults(func=cmd_path)

    p_cert = sub.add_parser("certify", parents=[common, lam],
                            help="check optimality of a fit via subgradient conditions")
    p_cert.add_argument("--beta", help="candidate fit CSV (default: fit it first)")
    p_cert.add_argument("--threshold", type=float, default=CERTIFY_THRESHOLD)
    p_cert.set_defaults(func=cmd_certify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="flni: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
