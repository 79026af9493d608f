"""Command-line entry point.

Exit codes: 0 ok, 2 bad input, 3 coefficient constraint violated,
4 search or memory budget exceeded, 5 a numerical check failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .bounds import DEFAULT_BUDGET, BudgetExceededError, exact_bound, heuristic_bound, violation_report
from .coeffs import ConventionError
from .graphio import BUILTINS, GraphError, GraphSpec, choose_pivots, load_graph, parse_builtin
from .graphstate import MemoryBudgetError, synthesize_state
from .inequality import (
    SCHEMA,
    BellExpression,
    CoefficientError,
    ImaginaryResidueError,
    build_expression,
    custom_coefficients,
    dumps_expression,
    expression_to_dict,
    ideal_realization,
    loads_expression,
    qubit_inequality,
    quantum_value,
    random_realization,
    sos_residual,
)

EXIT_OK, EXIT_INPUT, EXIT_CONSTRAINT, EXIT_BUDGET, EXIT_CHECK = 0, 2, 3, 4, 5

VALUE_TOL = 1e-9
SOS_TOL = 1e-8


class InputError(ValueError):
    pass


# ------------------------------------------------------------------ helpers

def read_graph(arg: str) -> GraphSpec:
    """A path to a JSON / edge-list file, or a built-in like ``star:5:3``."""
    if os.path.exists(arg):
        return load_graph(arg)
    return parse_builtin(arg)


def read_coeffs(arg: str | None) -> dict:
    """``c1.1=0.3,c2.4=0.7``, a JSON object, or a path to a JSON file."""
    if not arg:
        return {}
    if os.path.exists(arg):
        with open(arg) as fh:
            arg = fh.read()
    arg = arg.strip()
    if arg.startswith("{"):
        try:
            return dict(json.loads(arg))
        except json.JSONDecodeError as exc:
            raise InputError(f"bad coefficient JSON: {exc}") from exc
    out = {}
    for item in arg.split(","):
        key, sep, val = item.partition("=")
        if not sep:
            raise InputError(f"bad coefficient item {item!r}; expected key=value")
        out[key.strip()] = val.strip()
    return out


def pivots_from_args(g: GraphSpec, args):
    if args.v1 is None and args.v2 is None:
        return choose_pivots(g)
    if args.v1 is None or args.v2 is None:
        raise InputError("--v1 and --v2 must be given together")
    return choose_pivots(g, (args.v1 - 1, args.v2 - 1))


def make_expression(g: GraphSpec, args) -> BellExpression:
    piv = pivots_from_args(g, args)
    if g.d == 2:
        return qubit_inequality(g, piv)[0]
    coeffs = custom_coefficients(g, piv, read_coeffs(getattr(args, "coeffs", None)))
    return build_expression(g, piv, coeffs)


def graph_from_expression(expr: BellExpression):
    gd = expr.meta.get("graph")
    if not gd:
        return None, None
    g = GraphSpec.from_edges(gd["d"], gd["n"], gd["edges"])
    pv = expr.meta["pivots"]
    return g, choose_pivots(g, (pv["v1"] - 1, pv["v2"] - 1))


def checked(value: float, target: float | None, tol: float) -> dict:
    out = {"value": value, "tolerance": tol}
    if target is not None:
        out["target"] = target
        out["pass"] = bool(abs(value - target) <= tol)
    return out


def new_report(command: str, args) -> dict:
    return {"schema": SCHEMA, "tool_version": __version__, "command": command,
            "seeds": {"seed": getattr(args, "seed", 0)}, "results": {}, "timings": {}}


def emit(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, default=_json_default)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(f"cannot serialize {type(o)}")


class _Timer:
    def __init__(self, report: dict, key: str):
        self.report, self.key = report, key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report["timings"][self.key] = time.perf_counter() - self.t0


# ------------------------------------------------------------------ pieces

def _quantum_part(expr, g, piv, report) -> bool:
    res = report["results"]
    beta_q = float(expr.meta["beta_q"])
    ok = True
    res["beta_q"] = {"value": beta_q, "tolerance": 0.0}
    if g is not None:
        with _Timer(report, "quantum_value"):
            qv = quantum_value(expr, ideal_realization(g, piv))
        res["quantum_value_ideal"] = checked(qv, beta_q, VALUE_TOL)
        ok = res["quantum_value_ideal"]["pass"]
    return ok


def _sos_part(expr, g, piv, report, trials: int, seed: int) -> bool:
    res = report["results"]
    if g is None or expr.meta.get("construction") != "qudit":
        res["sos"] = {"skipped": "needs an expression built from a qudit graph"}
        return True
    real = ideal_realization(g, piv)
    with _Timer(report, "sos"):
        ideal = sos_residual(expr, real)
        rand = [sos_residual(expr, random_realization(expr, real.state, seed + i)) for i in range(trials)]
    res["sos"] = {"ideal": checked(ideal, 0.0, SOS_TOL),
                  "random_max": checked(max(rand) if rand else 0.0, 0.0, SOS_TOL),
                  "random_trials": trials}
    return res["sos"]["ideal"]["pass"] and res["sos"]["random_max"]["pass"]


def _classical_part(expr, report, args) -> None:
    res = report["results"]
    with _Timer(report, "classical_bound"):
        if args.mode == "exact":
            br = exact_bound(expr, budget=args.budget, threads=args.threads)
        else:
            br = heuristic_bound(expr, restarts=args.restarts, seed=args.seed)
    cb = br.to_dict()
    cb["lower_bound_only"] = args.mode != "exact"
    cb["tolerance"] = 1e-12
    res["classical_bound"] = cb
    beta_q = float(expr.meta.get("beta_q", math.nan))
    if not math.isnan(beta_q):
        rep = violation_report(br.value, beta_q)
        rep["note"] = "violation detected" if rep["violated"] else "no detected violation"
        res["violation"] = rep
    if expr.meta.get("construction") == "qubit":
        formula = float(expr.meta["beta_c_formula"])
        res["beta_c_formula"] = checked(br.value, formula, VALUE_TOL)


def _selftest_part(g, piv, report) -> bool:
    from .selftest import run_selftests
    with _Timer(report, "selftest"):
        reps = run_selftests(g, piv)
    report["results"]["selftest"] = [r.to_dict() for r in reps]
    return all(r.passed for r in reps)


# ------------------------------------------------------------------ commands

def cmd_validate(args) -> int:
    g = read_graph(args.graph)
    piv = choose_pivots(g)
    emit({"schema": SCHEMA, "valid": True, "graph": g.to_dict(), "pivots": piv.to_dict()}, args.output)
    return EXIT_OK


def cmd_list_graphs(args) -> int:
    emit({"schema": SCHEMA, "builtins": {
        "pair": "pair:d", "star": "star:N:d", "ame43": "ame43", "line": "line:N:d",
        "cycle": "cycle:N:d", "random": "random:N:d:seed"}}, args.output)
    return EXIT_OK


def cmd_build(args) -> int:
    g = read_graph(args.graph)
    expr = make_expression(g, args)
    text = dumps_expression(expr)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _expression_and_graph(args):
    src = args.input
    if os.path.exists(src):
        with open(src) as fh:
            text = fh.read()
        if '"terms"' in text:
            expr = loads_expression(text)
            g, piv = graph_from_expression(expr)
            return expr, g, piv
    g = read_graph(src)
    expr = make_expression(g, args)
    piv = pivots_from_args(g, args)
    return expr, g, piv


def cmd_qbound(args) -> int:
    expr, g, piv = _expression_and_graph(args)
    report = new_report("qbound", args)
    ok = _quantum_part(expr, g, piv, report)
    emit(report, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_cbound(args) -> int:
    expr, g, piv = _expression_and_graph(args)
    report = new_report("cbound", args)
    report["results"]["beta_q"] = {"value": float(expr.meta.get("beta_q", math.nan)), "tolerance": 0.0}
    _classical_part(expr, report, args)
    ok = report["results"].get("beta_c_formula", {}).get("pass", True)
    emit(report, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_sos(args) -> int:
    expr, g, piv = _expression_and_graph(args)
    report = new_report("sos-check", args)
    ok = _sos_part(expr, g, piv, report, args.trials, args.seed)
    emit(report, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_selftest(args) -> int:
    g = read_graph(args.graph)
    if g.d != 3:
        raise InputError("selftest needs a d = 3 graph")
    piv = pivots_from_args(g, args)
    report = new_report("selftest", args)
    ok = _selftest_part(g, piv, report)
    emit(report, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_analyze(args) -> int:
    expr, g, piv = _expression_and_graph(args)
    report = new_report("analyze", args)
    report["results"]["expression"] = {k: v for k, v in expression_to_dict(expr)["meta"].items()
                                       if k != "blocks"}
    ok = _quantum_part(expr, g, piv, report)
    ok &= _sos_part(expr, g, piv, report, args.trials, args.seed)
    try:
        _classical_part(expr, report, args)
    except BudgetExceededError:
        emit(report, args.output)
        raise
    ok &= report["results"].get("beta_c_formula", {}).get("pass", True)
    if args.selftest and g is not None and g.d == 3:
        ok &= _selftest_part(g, piv, report)
    report["results"]["all_checks_pass"] = bool(ok)
    emit(report, args.output)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_dump_state(args) -> int:
    g = read_graph(args.graph)
    state = synthesize_state(g)
    if args.output and args.output.endswith(".npy"):
        np.save(args.output, state.amplitudes)
    else:
        amps = [[float(a.real), float(a.imag)] for a in state.amplitudes]
        emit({"schema": SCHEMA, "d": g.d, "n": g.n, "amplitudes": amps}, args.output)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphbell", description="Bell inequalities for qudit graph states")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=1, help="worker threads for exhaustive search")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph_name="graph", help_text="graph file or built-in such as star:5:3"):
        sp.add_argument(graph_name, help=help_text)
        sp.add_argument("-o", "--output", help="write the result here instead of stdout")

    def pivots(sp):
        sp.add_argument("--v1", type=int, help="pivot vertex (1-based)")
        sp.add_argument("--v2", type=int, help="pivot partner (1-based), must neighbour --v1")
        sp.add_argument("--coeffs", help="custom coefficients, e.g. c1.1=0.3,c2.4=0.7")

    def search(sp):
        sp.add_argument("--mode", choices=("exact", "heuristic"), default="exact")
        sp.add_argument("--restarts", type=int, default=50)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)

    inp = "graph or expression JSON file"
    sp = sub.add_parser("validate", help="check a graph file")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("list-graphs", help="list built-in graphs")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_list_graphs)

    sp = sub.add_parser("build", help="write the Bell expression as JSON")
    common(sp)
    pivots(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("qbound", help="quantum bound and ideal value")
    common(sp, "input", inp)
    pivots(sp)
    sp.set_defaults(func=cmd_qbound, seed=0)

    sp = sub.add_parser("cbound", help="classical bound")
    common(sp, "input", inp)
    pivots(sp)
    search(sp)
    sp.set_defaults(func=cmd_cbound)

    sp = sub.add_parser("sos-check", help="sum-of-squares residuals")
    common(sp, "input", inp)
    pivots(sp)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_sos)

    sp = sub.add_parser("selftest", help="qutrit self-testing relations")
    common(sp)
    pivots(sp)
    sp.set_defaults(func=cmd_selftest, seed=0)

    sp = sub.add_parser("analyze", help="full report")
    common(sp, "input", inp)
    pivots(sp)
    search(sp)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--selftest", action="store_true", help="also run the d = 3 self-test suite")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("dump-state", help="graph-state amplitudes (.npy or JSON)")
    common(sp)
    sp.set_defaults(func=cmd_dump_state)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GraphError as exc:
        _fail({"error": exc.code, "message": str(exc)})
        return EXIT_INPUT
    except (InputError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail({"error": "BAD_INPUT", "message": str(exc)})
        return EXIT_INPUT
    except CoefficientError as exc:
        _fail({"error": "COEFFICIENT_CONSTRAINT", "violated": exc.violated, "message": str(exc)})
        return EXIT_CONSTRAINT
    except BudgetExceededError as exc:
        _fail({"error": "BUDGET", "needed": exc.needed, "budget": exc.budget,
               "message": f"{exc}; rerun with --mode heuristic or a larger --budget"})
        return EXIT_BUDGET
    except MemoryBudgetError as exc:
        _fail({"error": "MEMORY_BUDGET", "message": str(exc)})
        return EXIT_BUDGET
    except (ConventionError, ImaginaryResidueError) as exc:
        _fail({"error": "CHECK_FAILED", "message": str(exc)})
        return EXIT_CHECK


def _fail(obj) -> None:
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
