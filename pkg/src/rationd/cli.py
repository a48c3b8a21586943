"""Command-line interface.

Exit codes: 0 success, 1 malformed input, 2 domain error (including a failed
validity check), 3 search budget exceeded.  Results go to stdout as JSON;
errors go to stderr as one machine-readable JSON object.

The environment variable ``RATIOND_BUDGET`` overrides the enumeration and
search budgets, e.g. ``RATIOND_BUDGET="agents=20,quota=16,states=2000000"``
(keys: agents, quota, categories, states).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import allocate, documents, oracle, selection
from .errors import BudgetExceeded, DomainError, MalformedDocument, RationdError
from .model import thresholds as compute_thresholds
from .online import run_simulation


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage errors to 1
        raise MalformedDocument(message)


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise MalformedDocument(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path} is not valid JSON: {exc}") from exc


def _emit(document) -> None:
    sys.stdout.write(documents.dumps(document))


def _budgets() -> tuple[selection.SearchBudget, oracle.OracleBudget]:
    raw = os.environ.get("RATIOND_BUDGET", "")
    search = selection.DEFAULT_BUDGET
    enum = oracle.DEFAULT_ORACLE_BUDGET
    if not raw:
        return search, enum
    values = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise MalformedDocument(f"RATIOND_BUDGET entry {part!r} is not key=value")
        key, _, value = part.partition("=")
        try:
            values[key.strip()] = int(value)
        except ValueError:
            raise MalformedDocument(f"RATIOND_BUDGET value {value!r} is not an integer")
    unknown = set(values) - {"agents", "quota", "categories", "states"}
    if unknown:
        raise MalformedDocument(f"RATIOND_BUDGET has unknown keys {sorted(unknown)}")
    search = selection.SearchBudget(
        max_agents=values.get("agents", search.max_agents),
        max_total_quota=values.get("quota", search.max_total_quota),
        max_states=values.get("states", search.max_states),
    )
    enum = oracle.OracleBudget(
        max_agents=values.get("agents", enum.max_agents),
        max_categories=values.get("categories", enum.max_categories),
        max_total_quota=values.get("quota", enum.max_total_quota),
    )
    return search, enum


def _cmd_solve(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    scheme = {
        "rank-sum": allocate.RANK_SUM,
        "rank-minmax": allocate.RANK_MINMAX,
    }[args.perturbation]
    if instance.eligible_pairs():
        allocation = allocate.solve_valid(
            instance, allocate.make_perturbation(instance, scheme)
        )
    else:
        allocation = allocate.solve_valid(instance)
    _emit(documents.allocation_to_doc(allocation, instance))
    return 0


def _cmd_check(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    allocation = documents.allocation_from_doc(_load_json(args.allocation))
    report = allocate.check(instance, allocation)
    _emit(documents.validity_report_to_doc(report))
    return 0 if report.is_valid else 2


def _cmd_audit(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    search_budget, _ = _budgets()
    if args.optimize is None:
        if args.allocation is None:
            raise MalformedDocument("audit needs --allocation or --optimize")
        allocation = documents.allocation_from_doc(_load_json(args.allocation))
        _emit(documents.thresholds_to_doc(compute_thresholds(instance, allocation)))
        return 0
    if args.optimize in ("inner-sum", "inner-minmax"):
        mode = selection.SUM if args.optimize == "inner-sum" else selection.MINMAX
        allocation = selection.optimize_inner(instance, mode)
        ts = compute_thresholds(instance, allocation)
    else:
        mode = selection.MAXMIN if args.optimize == "outer-maxmin" else selection.SUM
        allocation, ts = selection.optimize_outer(instance, mode, budget=search_budget)
    _emit(
        {
            "allocation": documents.allocation_to_doc(allocation, instance),
            "thresholds": documents.thresholds_to_doc(ts),
        }
    )
    return 0


def _cmd_agent(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    search_budget, _ = _budgets()
    if args.query == "unanimous":
        result = selection.is_unanimous(instance, args.id)
    else:
        result = selection.is_serviceable(instance, args.id, budget=search_budget)
    _emit(documents.agent_query_to_doc(result, instance))
    return 0


def _cmd_prefs(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    utilities = documents.utilities_from_doc(_load_json(args.utilities))
    _, enum_budget = _budgets()
    if args.welfare is None:
        allocation = selection.allocate_with_preferences(instance, utilities)
    else:
        allocation = selection.brute_force_welfare(
            instance, utilities, args.welfare, budget=enum_budget
        )
    _emit(documents.allocation_to_doc(allocation, instance))
    return 0


def _cmd_decompose(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    allocation = documents.allocation_from_doc(_load_json(args.allocation))
    if not hasattr(allocation, "entries"):
        allocation = allocation.to_fractional()
    combination = allocate.decompose(instance, allocation, allocate.max_size(instance))
    _emit(documents.combination_to_doc(combination, instance))
    return 0


def _cmd_enumerate(args) -> int:
    instance = documents.instance_from_doc(_load_json(args.instance))
    _, enum_budget = _budgets()
    result = oracle.enumerate_all(instance, budget=enum_budget)
    _emit(documents.enumeration_to_doc(result, instance))
    return 0


def _cmd_simulate(args) -> int:
    config = documents.simulation_config_from_doc(_load_json(args.config))
    traces, summary = run_simulation(
        config.instance, config.policy, config.trials, config.seed
    )
    _emit(
        {
            "trials": [
                documents.trace_to_doc(t, include_rounds=args.rounds) for t in traces
            ],
            "summary": documents.summary_to_doc(summary),
        }
    )
    return 0


def _cmd_scarf(args) -> int:
    table = documents.f_table_from_doc(_load_json(args.f_table))
    report = oracle.check_local_perturbation(table)
    _emit(documents.scarf_report_to_doc(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rationd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute a valid allocation")
    p.add_argument("--instance", required=True)
    p.add_argument(
        "--perturbation", choices=("rank-sum", "rank-minmax"), default="rank-sum"
    )
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("check", help="validate an allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--allocation", required=True)
    p.set_defaults(handler=_cmd_check)

    p = sub.add_parser("audit", help="thresholds of an allocation, or optimize them")
    p.add_argument("--instance", required=True)
    p.add_argument("--allocation")
    p.add_argument(
        "--optimize",
        choices=("inner-sum", "inner-minmax", "outer-maxmin", "outer-sum"),
    )
    p.set_defaults(handler=_cmd_audit)

    p = sub.add_parser("agent", help="unanimity / serviceability queries")
    p.add_argument("--instance", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--query", choices=("unanimous", "serviceable"), required=True)
    p.set_defaults(handler=_cmd_agent)

    p = sub.add_parser("prefs", help="utility-aware selection")
    p.add_argument("--instance", required=True)
    p.add_argument("--utilities", required=True)
    p.add_argument("--welfare", choices=("sum", "nash", "min"))
    p.set_defaults(handler=_cmd_prefs)

    p = sub.add_parser("decompose", help="decompose a fractional allocation")
    p.add_argument("--instance", required=True)
    p.add_argument("--allocation", required=True)
    p.set_defaults(handler=_cmd_decompose)

    p = sub.add_parser("enumerate", help="brute-force classification (budget-guarded)")
    p.add_argument("--instance", required=True)
    p.set_defaults(handler=_cmd_enumerate)

    p = sub.add_parser("simulate", help="run the online simulator")
    p.add_argument("--config", required=True)
    p.add_argument("--rounds", action="store_true", help="include per-round details")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("scarf", help="local-perturbation stability check")
    p.add_argument("--f-table", dest="f_table", required=True)
    p.set_defaults(handler=_cmd_scarf)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except MalformedDocument as exc:
        _error(exc)
        return 1
    except BudgetExceeded as exc:
        _error(exc)
        return 3
    except DomainError as exc:
        _error(exc)
        return 2
    except RationdError as exc:
        _error(exc)
        return 2


def _error(exc: Exception) -> None:
    sys.stderr.write(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
    )


if __name__ == "__main__":
    sys.exit(main())
