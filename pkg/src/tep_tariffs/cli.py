"""Command-line front end.

    tep-tariffs generate (--two-node | --two-zone | --garver) [...] --out FILE
    tep-tariffs solve INSTANCE --scheme {cs,csr,csrl,ts} [...] [--out FILE]
    tep-tariffs verify INSTANCE RESULT
    tep-tariffs compare INSTANCE [...] [--format csv|text|json]
    tep-tariffs report INSTANCE RESULT [--zones 0,1/2,3]

Exit status is 0 on success, 1 when a solver fails and 2 when an input or
a stored result fails validation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import econ
from .clearing import (clear_market, congestion_rent_direct, gross_welfare,
                       tariff_payments, verify_outcome)
from .instances import (InstanceFormatError, dump_instance, generate_garver,
                        generate_two_node, generate_two_zone, load_instance)
from .milp import NodeLimitError
from .model import Instance
from . import schemes
from . import tolerances as tol

EXIT_OK, EXIT_SOLVER, EXIT_INVALID = 0, 1, 2
SCHEMES = {"cs": schemes.CS, "csr": schemes.CSR, "csrl": schemes.CSRL, "ts": schemes.TS}


class ValidationFailure(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing


def _lumpy(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive) or a comma list."""
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(math.floor((hi - lo) / step + 1e-9))
        return tuple(round(lo + k * step, 12) for k in range(n + 1))
    return tuple(float(v) for v in text.split(","))


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-step", type=float, default=0.5, help="tariff grid step (money/MWh)")
    p.add_argument("--tau-max", type=float, default=15.0, help="largest tariff level")
    p.add_argument("--grid-step", type=float, default=0.5, help="CSR capacity grid step (MW)")
    p.add_argument("--gap-abs", type=float, default=0.0)
    p.add_argument("--gap-rel", type=float, default=0.0)
    p.add_argument("--method", choices=("auto", "bnb", "highs"), default="auto")
    p.add_argument("--node-limit", type=int, default=200_000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tep-tariffs",
                                 description="Transmission expansion planning with network tariffs")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an instance file")
    kind = g.add_mutually_exclusive_group(required=True)
    kind.add_argument("--two-node", action="store_true")
    kind.add_argument("--two-zone", action="store_true")
    kind.add_argument("--garver", action="store_true")
    g.add_argument("--step", type=float, default=1.0, help="ladder width for two-node/two-zone")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--per-node", type=int, default=10)
    g.add_argument("--qmax-high", type=float, default=None,
                   help="largest bid size; default keeps 500 MW nominal per node")
    g.add_argument("--lumpy", type=_lumpy, default=None, help="lumpy set, 'lo:hi:step' or list")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve one planning scheme")
    s.add_argument("instance")
    s.add_argument("--scheme", choices=sorted(SCHEMES), required=True)
    _add_solver_args(s)
    s.add_argument("--out", help="output file (stdout if omitted)")
    s.add_argument("--format", choices=("json", "csv"), default="json")

    v = sub.add_parser("verify", help="check a stored result")
    v.add_argument("instance")
    v.add_argument("result")

    c = sub.add_parser("compare", help="solve all schemes and tabulate")
    c.add_argument("instance")
    c.add_argument("--schemes", default="cs,csr,csrl,ts")
    _add_solver_args(c)
    c.add_argument("--out")
    c.add_argument("--format", choices=("csv", "text", "json"), default="text")

    r = sub.add_parser("report", help="economic summary and trade curves")
    r.add_argument("instance")
    r.add_argument("result", nargs="?")
    r.add_argument("--zones", default=None,
                   help="two-zone node split, e.g. '0/1' or '0,1,2/3,4,5'")
    r.add_argument("--period", type=int, default=0)
    r.add_argument("--out")
    r.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


# --------------------------------------------------------------------------
# commands


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _grid(instance: Instance, args) -> schemes.TariffGrid:
    if instance.tariff_grids:
        return schemes.TariffGrid.from_instance(instance)
    return schemes.TariffGrid.uniform(instance, args.tau_step, args.tau_max)


def solve_scheme(instance: Instance, scheme: str, args) -> schemes.PlanResult:
    common = dict(milp_method=args.method, gap_abs=args.gap_abs, gap_rel=args.gap_rel,
                  node_limit=args.node_limit)
    if scheme == "cs":
        return schemes.solve_cs(instance, **common)
    if scheme == "csr":
        return schemes.solve_csr(instance, grid_step=args.grid_step, **common)
    if scheme == "csrl":
        return schemes.solve_csrl(instance, **common)
    return schemes.solve_ts(instance, _grid(instance, args), **common)


def cmd_generate(args) -> int:
    if args.garver:
        qmax = args.qmax_high if args.qmax_high is not None else 500.0 / args.per_node
        kw = {"lumpy": args.lumpy} if args.lumpy else {}
        inst = generate_garver(seed=args.seed, per_node=args.per_node, qmax_high=qmax, **kw)
    else:
        kw = {"lumpy": args.lumpy} if args.lumpy else {}
        fn = generate_two_node if args.two_node else generate_two_zone
        inst = fn(step=args.step, **kw)
    Path(args.out).write_text(dump_instance(inst))
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    res = solve_scheme(inst, args.scheme, args)
    text = res.to_json() if args.format == "json" else schemes.results_to_csv([res])
    _emit(text, args.out)
    return EXIT_OK


def check_result(instance: Instance, doc: dict) -> list[str]:
    """Every reason a stored result is not a valid outcome of its plan."""
    failures = []
    plan = schemes.plan_from_dict(doc["plan"])
    failures += [f"plan: {e}" for e in plan.check(instance.network)]
    if failures:
        return failures
    outcome = schemes.outcome_from_dict(doc["outcome"], instance, plan)
    report = verify_outcome(outcome, plan, instance)
    failures += [str(c) for c in report.failures]

    tc = schemes.investment_cost(instance, plan)
    cr = congestion_rent_direct(outcome, instance)
    pay = tariff_payments(outcome, plan, instance)
    figures = {"investment_cost": tc, "congestion_rent": cr, "tariff_payments": pay,
               "revenue_imbalance": cr + pay - tc,
               "welfare": gross_welfare(outcome, instance) - tc}
    for key, value in figures.items():
        stored = float(doc[key])
        if abs(stored - value) > tol.RECLEAR_TOL * (1.0 + abs(value)):
            failures.append(f"{key}: stored {stored:.9g}, recomputed {value:.9g}")
    if doc.get("scheme") != schemes.CS and cr + pay - tc < -tol.RECLEAR_TOL * (1.0 + tc):
        failures.append(f"revenue adequacy: imbalance {cr + pay - tc:.9g} < 0")

    recleared = clear_market(instance, plan)
    if abs(recleared.objective - outcome.objective) > tol.RECLEAR_TOL * (1.0 + abs(recleared.objective)):
        failures.append(f"re-clearing objective {recleared.objective:.9g} "
                        f"differs from stored {outcome.objective:.9g}")
    return failures


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    try:
        doc = json.loads(Path(args.result).read_text())
        failures = check_result(inst, doc)
    except (KeyError, ValueError, TypeError) as exc:
        failures = [f"malformed result: {exc}"]
    if failures:
        print("FAILED")
        for f in failures:
            print(f"  {f}")
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_compare(args) -> int:
    inst = load_instance(args.instance)
    names = [s.strip() for s in args.schemes.split(",") if s.strip()]
    unknown = [s for s in names if s not in SCHEMES]
    if unknown:
        raise ValidationFailure(f"unknown schemes {unknown}")
    results = [solve_scheme(inst, s, args) for s in names]
    table = econ.comparison_table(results)
    if args.format == "csv":
        text = econ.table_to_csv(table)
    elif args.format == "json":
        text = json.dumps([r.to_dict() for r in results], indent=1, sort_keys=True) + "\n"
    else:
        text = econ.table_to_text(table)
    _emit(text, args.out)
    return EXIT_OK


def _zones(text: str) -> list[list[int]]:
    parts = text.split("/")
    if len(parts) != 2:
        raise ValidationFailure("--zones needs two node lists separated by '/'")
    return [[int(v) for v in p.split(",") if v.strip()] for p in parts]


def cmd_report(args) -> int:
    inst = load_instance(args.instance)
    doc: dict = {}
    if args.result:
        stored = json.loads(Path(args.result).read_text())
        plan = schemes.plan_from_dict(stored["plan"])
        outcome = schemes.outcome_from_dict(stored["outcome"], inst, plan)
        res = schemes.PlanResult(stored.get("scheme", "?"), plan, outcome, welfare=0.0,
                                 gross_welfare=0.0,
                                 investment_cost=schemes.investment_cost(inst, plan),
                                 congestion_rent=0.0, tariff_payments=0.0, revenue_imbalance=0.0)
        doc["summary"] = econ.summarize(res, inst).to_dict()
    zones = _zones(args.zones) if args.zones else (
        [[0], [1]] if inst.network.n_nodes == 2 else None)
    curves = []
    if zones is not None:
        imp, exp = econ.net_import_export_curves(inst, zones, args.period)
        curves = [imp, exp]
        doc["curves"] = {c.kind: [[float(f"{q:.9g}"), float(f"{p:.9g}")]
                                  for q, p in zip(c.quantity, c.price)] for c in curves}
    if args.format == "csv":
        text = econ.curves_to_csv(curves)
    else:
        text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    _emit(text, args.out)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "verify": cmd_verify,
            "compare": cmd_compare, "report": cmd_report}


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InstanceFormatError, ValidationFailure, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (schemes.PlanningError, NodeLimitError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())
